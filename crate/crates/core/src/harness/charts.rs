//! Text and SVG charts: GANTT schedules, makespan curves and saliency strips.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::experiment::{HarnessError, MetricsRow};
use crate::drm::EncodingLayout;
use crate::model::{EpisodeResult, JobSpec, PeId, TaskId};

pub const DEFAULT_ROLLING_WINDOW: usize = 20;
const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanttFormat {
    Text,
    Svg,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GanttOptions<'a> {
    /// Task names for bar labels; IDs are used otherwise.
    pub job: Option<&'a JobSpec>,
    /// Lane count; defaults to the highest PE used plus one.
    pub num_pes: Option<usize>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn task_label(opts: &GanttOptions<'_>, task: TaskId) -> String {
    opts.job.and_then(|j| j.tasks.get(task)).map_or_else(|| format!("t{task}"), |t| t.name.clone())
}

/// One lane per PE with a bar per assignment over `[start, finish)`.
pub fn emit_gantt(result: &EpisodeResult, format: GanttFormat, opts: &GanttOptions<'_>) -> String {
    let used = result.schedule.iter().map(|a| a.pe_id + 1).max().unwrap_or(1);
    let lanes = opts.num_pes.unwrap_or(used).max(used);
    let mut by_pe: Vec<Vec<_>> = vec![Vec::new(); lanes];
    for a in &result.schedule {
        by_pe[a.pe_id].push(a);
    }
    for lane in &mut by_pe {
        lane.sort_by_key(|a| (a.start_tick, a.task_id));
    }
    match format {
        GanttFormat::Text => gantt_text(result, &by_pe, opts),
        GanttFormat::Svg => gantt_svg(result, &by_pe, opts),
    }
}

fn gantt_text(result: &EpisodeResult, by_pe: &[Vec<&crate::model::Assignment>], opts: &GanttOptions<'_>) -> String {
    const SYMBOLS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    const MAX_COLS: u64 = 100;
    let span = result.makespan.max(1);
    let per_col = span.div_ceil(MAX_COLS);
    let cols = span.div_ceil(per_col) as usize;
    let mut out = format!("makespan {} ms, {} ms per column\n", result.makespan, per_col);
    for (pe, lane) in by_pe.iter().enumerate() {
        let mut row = vec![b'.'; cols];
        for a in lane {
            let sym = SYMBOLS[a.task_id % SYMBOLS.len()];
            let (lo, hi) = ((a.start_tick / per_col) as usize, (a.finish_tick.div_ceil(per_col) as usize).min(cols));
            row[lo..hi].fill(sym);
        }
        let _ = writeln!(out, "PE{pe:<3}|{}|", String::from_utf8(row).expect("ascii"));
    }
    for (pe, lane) in by_pe.iter().enumerate() {
        let bars: Vec<String> = lane
            .iter()
            .map(|a| format!("{}[{},{})", task_label(opts, a.task_id), a.start_tick, a.finish_tick))
            .collect();
        let _ = writeln!(out, "PE{pe:<3} {}", bars.join(" "));
    }
    out
}

fn gantt_svg(result: &EpisodeResult, by_pe: &[Vec<&crate::model::Assignment>], opts: &GanttOptions<'_>) -> String {
    let (left, top, lane_h, width) = (60.0, 30.0, 36.0, 800.0);
    let span = result.makespan.max(1) as f64;
    let x = |t: u64| left + width * t as f64 / span;
    let height = top + lane_h * by_pe.len() as f64 + 30.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"monospace\" font-size=\"12\">\n",
        left + width + 20.0
    );
    let _ = writeln!(s, "<text x=\"{left}\" y=\"18\">makespan {} ms</text>", result.makespan);
    for (pe, lane) in by_pe.iter().enumerate() {
        let y = top + lane_h * pe as f64;
        let _ = writeln!(s, "<text x=\"4\" y=\"{}\">PE{pe}</text>", y + lane_h / 2.0 + 4.0);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#ccc\"/>",
            y + lane_h,
            left + width
        );
        for a in lane {
            let label = escape(&task_label(opts, a.task_id));
            let (x0, x1) = (x(a.start_tick), x(a.finish_tick));
            let _ = writeln!(
                s,
                "<rect class=\"bar\" data-task=\"{}\" data-pe=\"{}\" data-start=\"{}\" data-finish=\"{}\" x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" stroke=\"#333\"><title>{label} [{},{})</title></rect>",
                a.task_id,
                a.pe_id,
                a.start_tick,
                a.finish_tick,
                y + 4.0,
                x1 - x0,
                lane_h - 8.0,
                PALETTE[a.task_id % PALETTE.len()],
                a.start_tick,
                a.finish_tick
            );
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">{label}</text>", x0 + 3.0, y + lane_h / 2.0 + 4.0);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Trailing mean: element `i` averages `values[i+1-window ..= i]`, using
/// fewer points at the start of the series.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

/// Makespan versus episode, one polyline per scheduler. Series from several
/// seeds are averaged per episode, then smoothed with a trailing window
/// (default 20; 1 draws the raw series).
pub fn emit_curve(rows: &[MetricsRow], window: Option<usize>) -> String {
    let window = window.unwrap_or(DEFAULT_ROLLING_WINDOW);
    let mut acc: BTreeMap<&str, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.scheduler.as_str()) {
            order.push(&r.scheduler);
        }
        let e = acc.entry(&r.scheduler).or_default().entry(r.episode).or_default();
        e.0 += r.makespan_ms as f64;
        e.1 += 1;
    }
    let series: Vec<(&str, Vec<(usize, f64)>)> = order
        .iter()
        .map(|name| {
            let pts = &acc[name];
            let ys = rolling_mean(&pts.values().map(|(s, n)| s / *n as f64).collect::<Vec<_>>(), window);
            (*name, pts.keys().copied().zip(ys).collect())
        })
        .collect();

    let (left, top, w, h) = (70.0, 20.0, 720.0, 360.0);
    let max_ep = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).max().unwrap_or(0).max(1) as f64;
    let ys = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1));
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = ((hi - lo) * 0.05).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let px = |e: usize| left + w * e as f64 / max_ep;
    let py = |v: f64| top + h * (hi - v) / (hi - lo);

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        left + w + 150.0,
        top + h + 50.0
    );
    let _ = writeln!(s, "<rect x=\"{left}\" y=\"{top}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#333\"/>");
    let _ =
        writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">episode</text>", left + w / 2.0, top + h + 40.0);
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {0})\" text-anchor=\"middle\">makespan (ms)</text>",
        top + h / 2.0
    );
    for (v, label) in [(lo + pad, lo + pad), (hi - pad, hi - pad)] {
        let _ =
            writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{label:.1}</text>", left - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{left}\" y=\"{}\">0</text>", top + h + 16.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{max_ep}</text>", left + w, top + h + 16.0);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = pts.iter().map(|&(e, v)| format!("{:.2},{:.2}", px(e), py(v))).collect();
        let _ = writeln!(
            s,
            "<polyline data-scheduler=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            escape(name),
            points.join(" ")
        );
    }
    s.push_str("<g class=\"legend\">\n");
    for (i, (name, _)) in series.iter().enumerate() {
        let y = top + 10.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            "<line x1=\"{0}\" y1=\"{y}\" x2=\"{1}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            left + w + 15.0,
            left + w + 35.0
        );
        let _ = writeln!(
            s,
            "<text class=\"legend-label\" x=\"{}\" y=\"{}\">{}</text>",
            left + w + 40.0,
            y + 4.0,
            escape(name)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Cell fill for a magnitude already normalised to `[0, 1]`: white to dark red.
pub fn heat_color(level: f64) -> String {
    let l = level.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * l).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 165.0), lerp(255.0, 0.0), lerp(255.0, 38.0))
}

/// Heat strip of `|saliency|` normalised by its maximum, with one labelled
/// bracket per encoding block.
pub fn emit_saliency_map(saliency: &[f64], layout: &EncodingLayout) -> Result<String, HarnessError> {
    if saliency.len() != layout.dim() {
        return Err(HarnessError::Dimension { expected: layout.dim(), found: saliency.len() });
    }
    let max = saliency.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cell = (1000.0 / saliency.len().max(1) as f64).clamp(2.0, 16.0);
    let (left, top, h) = (10.0, 40.0, 40.0);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        left * 2.0 + cell * saliency.len() as f64,
        top + h + 20.0
    );
    for (name, range) in layout.blocks() {
        let (x0, x1) = (left + cell * range.start as f64, left + cell * range.end as f64);
        let _ = writeln!(s, "<text class=\"block-label\" x=\"{x0:.2}\" y=\"16\">{name}</text>");
        let _ =
            writeln!(s, "<line x1=\"{x0:.2}\" y1=\"24\" x2=\"{x1:.2}\" y2=\"24\" stroke=\"#333\" stroke-width=\"2\"/>");
    }
    for (i, v) in saliency.iter().enumerate() {
        let level = if max > 0.0 { v.abs() / max } else { 0.0 };
        let _ = writeln!(
            s,
            "<rect class=\"cell\" data-index=\"{i}\" data-value=\"{v:e}\" x=\"{:.2}\" y=\"{top}\" width=\"{cell:.2}\" height=\"{h}\" fill=\"{}\"><title>{}</title></rect>",
            left + cell * i as f64,
            heat_color(level),
            escape(&layout.label(i))
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Lanes of the GANTT chart as `(pe, task, start, finish)`, parsed back from
/// the SVG's data attributes.
pub fn parse_gantt_svg(svg: &str) -> Vec<(PeId, TaskId, u64, u64)> {
    fn attr<T: std::str::FromStr>(tag: &str, name: &str) -> Option<T> {
        let key = format!("{name}=\"");
        let at = tag.find(&key)? + key.len();
        tag[at..].split('"').next()?.parse().ok()
    }
    svg.split("<rect")
        .skip(1)
        .filter_map(|tag| {
            let tag = tag.split('>').next()?;
            Some((attr(tag, "data-pe")?, attr(tag, "data-task")?, attr(tag, "data-start")?, attr(tag, "data-finish")?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Assignment;

    fn chain_result() -> EpisodeResult {
        let a = |t, pe, s, f| Assignment { task_id: t, pe_id: pe, start_tick: s, finish_tick: f, assign_tick: 0 };
        EpisodeResult {
            makespan: 6,
            schedule: vec![a(0, 0, 0, 2), a(1, 1, 2, 4), a(2, 1, 4, 6)],
            decision_count: 3,
            terminated_by_timeout: false,
        }
    }

    #[test]
    fn rolling_mean_arithmetic() {
        assert_eq!(rolling_mean(&[100.0, 90.0, 80.0], 2), vec![100.0, 95.0, 85.0]);
        assert_eq!(rolling_mean(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert!(rolling_mean(&[], 20).is_empty());
    }

    #[test]
    fn gantt_text_chain() {
        let job = JobSpec::from_edges("chain", vec![("A", vec![]), ("B", vec![0]), ("C", vec![0])]);
        let opts = GanttOptions { job: Some(&job), num_pes: Some(2) };
        let text = emit_gantt(&chain_result(), GanttFormat::Text, &opts);
        assert_eq!(
            text,
            "makespan 6 ms, 1 ms per column\nPE0  |00....|\nPE1  |..1122|\nPE0   A[0,2)\nPE1   B[2,4) C[4,6)\n"
        );
        assert_eq!(text, emit_gantt(&chain_result(), GanttFormat::Text, &opts));
    }

    #[test]
    fn gantt_svg_attributes() {
        let svg = emit_gantt(&chain_result(), GanttFormat::Svg, &GanttOptions::default());
        assert_eq!(parse_gantt_svg(&svg), vec![(0, 0, 0, 2), (1, 1, 2, 4), (1, 2, 4, 6)]);
    }

    #[test]
    fn single_bar() {
        let r = EpisodeResult {
            makespan: 7,
            schedule: vec![Assignment { task_id: 0, pe_id: 0, start_tick: 0, finish_tick: 7, assign_tick: 0 }],
            decision_count: 1,
            terminated_by_timeout: false,
        };
        let svg = emit_gantt(&r, GanttFormat::Svg, &GanttOptions::default());
        assert_eq!(parse_gantt_svg(&svg), vec![(0, 0, 0, 7)]);
    }

    fn row(s: &str, ep: usize, ms: u64) -> MetricsRow {
        MetricsRow {
            seed: 0,
            scheduler: s.into(),
            episode: ep,
            makespan_ms: ms,
            timeout: false,
            temperature: None,
            loss_actor: None,
            loss_critic: None,
        }
    }

    fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
        svg.split("points=\"")
            .skip(1)
            .map(|p| {
                p.split('"')
                    .next()
                    .unwrap()
                    .split(' ')
                    .map(|xy| {
                        let (x, y) = xy.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn curves() {
        let rows: Vec<_> =
            (0..10).map(|e| row("met", e, 50)).chain((0..10).map(|e| row("drm", e, 80 - e as u64))).collect();
        let svg = emit_curve(&rows, None);
        let lines = polylines(&svg);
        assert_eq!(lines.len(), 2);
        assert!(lines[0].windows(2).all(|w| w[0].1 == w[1].1), "constant series is horizontal");
        assert!(svg.contains("<g class=\"legend\">"));
        assert_eq!(svg.matches("class=\"legend-label\"").count(), 2);
    }

    #[test]
    fn saliency_strip() {
        let layout = EncodingLayout::new(3, 2);
        let zero = emit_saliency_map(&vec![0.0; layout.dim()], &layout).unwrap();
        let white = format!("fill=\"{}\"", heat_color(0.0));
        assert_eq!(zero.matches(&white).count(), layout.dim());
        assert_eq!(zero.matches("class=\"block-label\"").count(), 4);

        let mut spike = vec![0.0; layout.dim()];
        spike[5] = -3.0;
        let svg = emit_saliency_map(&spike, &layout).unwrap();
        assert_eq!(svg.matches(&format!("fill=\"{}\"", heat_color(1.0))).count(), 1);

        assert!(matches!(emit_saliency_map(&[1.0], &layout), Err(HarnessError::Dimension { .. })));
    }
}
