//! Multi-seed experiment runs.
//!
//! Every (seed, scheduler) pair is an independent cell and cells run in
//! parallel. The randomization RNG of a cell depends only on the seed, so
//! all schedulers of one seed see the same sequence of resource matrices.
//! Results are collected and written out in config order by one writer.

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::charts::emit_curve;
use super::config::{ConfigError, ExperimentConfig, SchedulerKind};
use super::generate::randomize_resource_matrix;
use crate::drm::{derive_seed, DrmAgent, DrmConfig, EncodingLayout};
use crate::heuristics::{Eft, Etf, Met};
use crate::model::{EpisodeResult, ExecTimes, JobSpec, Ms, ResourceMatrix};
use crate::sim::{run_episode_observed, EpisodeRecord, Scheduler};
use crate::spec_io::{parse_job, parse_resource_matrix};

const RANDOMIZE_STREAM: u64 = 0x72616e64;
/// Window for the "last N episodes" summary statistic.
pub const SUMMARY_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("saliency has {found} entries but the layout needs {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("metrics: {0}")]
    Metrics(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub scheduler: String,
    pub episode: usize,
    pub makespan_ms: Ms,
    pub timeout: bool,
    pub temperature: Option<f64>,
    pub loss_actor: Option<f64>,
    pub loss_critic: Option<f64>,
}

/// One job with its (unrandomized) resource matrix.
#[derive(Debug, Clone)]
pub struct Instance {
    pub job: JobSpec,
    pub rm: ResourceMatrix,
}

pub fn load_instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>, HarnessError> {
    let read = |p: &Path| fs::read_to_string(p).map_err(io_err(p));
    let load = |p: &Path, m: String| HarnessError::Load { path: p.to_path_buf(), message: m };
    let mut out = Vec::with_capacity(cfg.job_files.len());
    for (i, job_path) in cfg.job_files.iter().enumerate() {
        let rm_path = cfg.rm_for(i);
        let job = parse_job(&read(job_path)?).map_err(|e| load(job_path, e.to_string()))?;
        let rm = parse_resource_matrix(&read(rm_path)?, &job).map_err(|e| load(rm_path, e.to_string()))?;
        out.push(Instance { job, rm });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub seed: u64,
    pub scheduler: String,
    pub episodes: usize,
    pub mean_makespan: f64,
    pub min_makespan: Ms,
    pub last50_mean_makespan: f64,
    pub timeouts: usize,
    /// Greedy evaluation of the trained agent on the first, unrandomized instance.
    pub greedy_makespan: Option<Ms>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerSummary {
    pub scheduler: String,
    pub seeds: usize,
    pub mean_makespan: f64,
    pub min_makespan: Ms,
    /// Mean over seeds of each seed's last-50 mean.
    pub last50_mean_makespan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub schedulers: Vec<SchedulerSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub records: Vec<EpisodeRecord>,
    /// Serialized final agent per seed, for DRM cells that finished.
    pub checkpoints: Vec<(u64, String)>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn failures(&self) -> impl Iterator<Item = &CellSummary> {
        self.summary.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn makespans(&self, seed: u64, scheduler: &str) -> Vec<Ms> {
        self.rows.iter().filter(|r| r.seed == seed && r.scheduler == scheduler).map(|r| r.makespan_ms).collect()
    }
}

/// Mean of the last `n` values (all of them if fewer).
pub fn tail_mean(values: &[Ms], n: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(n)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(|&v| v as f64).sum::<f64>() / tail.len() as f64
}

struct Cell {
    seed: u64,
    kind: SchedulerKind,
    rows: Vec<MetricsRow>,
    records: Vec<EpisodeRecord>,
    checkpoint: Option<String>,
    greedy: Option<EpisodeResult>,
    error: Option<String>,
}

impl Cell {
    fn summary(&self) -> CellSummary {
        let ms: Vec<Ms> = self.rows.iter().map(|r| r.makespan_ms).collect();
        CellSummary {
            seed: self.seed,
            scheduler: self.kind.name().to_string(),
            episodes: ms.len(),
            mean_makespan: tail_mean(&ms, ms.len()),
            min_makespan: ms.iter().copied().min().unwrap_or(0),
            last50_mean_makespan: tail_mean(&ms, SUMMARY_WINDOW),
            timeouts: self.rows.iter().filter(|r| r.timeout).count(),
            greedy_makespan: self.greedy.as_ref().map(|r| r.makespan),
            error: self.error.clone(),
        }
    }
}

/// Agent configuration used for experiment seed `seed`.
pub fn drm_config_for_seed(base: &DrmConfig, seed: u64) -> DrmConfig {
    DrmConfig { seed: base.seed.wrapping_add(seed), ..base.clone() }
}

fn run_cell(cfg: &ExperimentConfig, instances: &[Instance], seed: u64, kind: SchedulerKind) -> Cell {
    let mut cell =
        Cell { seed, kind, rows: Vec::new(), records: Vec::new(), checkpoint: None, greedy: None, error: None };
    match fill_cell(cfg, instances, &mut cell) {
        Ok(()) => {
            let ms: Vec<Ms> = cell.rows.iter().map(|r| r.makespan_ms).collect();
            log::info!(
                "seed {seed}, scheduler {kind}: done, last-{SUMMARY_WINDOW} mean {:.1} ms",
                tail_mean(&ms, SUMMARY_WINDOW)
            );
        }
        Err(e) => {
            log::error!("seed {seed}, scheduler {kind}: {e}");
            cell.error = Some(e);
        }
    }
    cell
}

fn fill_cell(cfg: &ExperimentConfig, instances: &[Instance], cell: &mut Cell) -> Result<(), String> {
    let base: Vec<ExecTimes> =
        instances.iter().map(|i| i.rm.exec_times(&i.job)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut jitter = ChaCha8Rng::seed_from_u64(derive_seed(cell.seed, RANDOMIZE_STREAM));
    let mut agent = match cell.kind {
        SchedulerKind::Drm => {
            let first = &instances[0];
            let layout = EncodingLayout::new(first.job.len(), first.rm.num_pes());
            Some(DrmAgent::new(layout, drm_config_for_seed(&cfg.drm, cell.seed)).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    for episode in 0..cfg.episodes {
        let idx = episode % instances.len();
        let inst = &instances[idx];
        let jittered;
        let exec = if cfg.randomize {
            jittered = randomize_resource_matrix(&inst.rm, cfg.randomize_fraction, &mut jitter)
                .exec_times(&inst.job)
                .map_err(|e| e.to_string())?;
            &jittered
        } else {
            &base[idx]
        };
        let fail = |e: String| format!("episode {episode}: {e}");
        let (result, temperature, losses) = match (cell.kind, agent.as_mut()) {
            (SchedulerKind::Drm, Some(agent)) => {
                let s =
                    agent.train_episode(&inst.job, exec, cfg.max_simulation_length).map_err(|e| fail(e.to_string()))?;
                (s.result, Some(s.tau), Some((s.loss_actor, s.loss_critic)))
            }
            (kind, _) => {
                let mut sched = heuristic(kind);
                let r = run_episode_observed(&inst.job, exec, sched.as_mut(), cfg.max_simulation_length, &mut |_| {})
                    .map_err(|e| fail(e.to_string()))?;
                (r, None, None)
            }
        };
        cell.rows.push(MetricsRow {
            seed: cell.seed,
            scheduler: cell.kind.name().to_string(),
            episode,
            makespan_ms: result.makespan,
            timeout: result.terminated_by_timeout,
            temperature,
            loss_actor: losses.map(|l| l.0),
            loss_critic: losses.map(|l| l.1),
        });
        cell.records.push(EpisodeRecord::new(episode, cell.kind.name(), cell.seed, &result));
    }
    if let Some(agent) = agent.as_mut() {
        let greedy = agent
            .evaluate_greedy(&instances[0].job, &base[0], cfg.max_simulation_length)
            .map_err(|e| format!("greedy evaluation: {e}"))?;
        cell.records.push(EpisodeRecord::new(cfg.episodes, "drm-greedy", cell.seed, &greedy));
        cell.greedy = Some(greedy);
        cell.checkpoint = Some(agent.to_checkpoint());
    }
    Ok(())
}

fn heuristic(kind: SchedulerKind) -> Box<dyn Scheduler> {
    match kind {
        SchedulerKind::Met => Box::new(Met),
        SchedulerKind::Eft => Box::new(Eft),
        SchedulerKind::Etf | SchedulerKind::Drm => Box::new(Etf),
    }
}

/// Runs every cell against already loaded instances. A load failure is
/// reported as the error of every cell.
pub fn run_cells(cfg: &ExperimentConfig, instances: Result<&[Instance], String>) -> ExperimentOutput {
    let pairs: Vec<(u64, SchedulerKind)> =
        cfg.seeds.iter().flat_map(|&s| cfg.schedulers.iter().map(move |&k| (s, k))).collect();
    let cells: Vec<Cell> = pairs
        .par_iter()
        .map(|&(seed, kind)| match &instances {
            Ok(inst) => run_cell(cfg, inst, seed, kind),
            Err(e) => {
                log::error!("seed {seed}, scheduler {kind}: {e}");
                Cell {
                    seed,
                    kind,
                    rows: vec![],
                    records: vec![],
                    checkpoint: None,
                    greedy: None,
                    error: Some(e.clone()),
                }
            }
        })
        .collect();

    let summaries: Vec<CellSummary> = cells.iter().map(Cell::summary).collect();
    let schedulers = cfg
        .schedulers
        .iter()
        .filter_map(|k| {
            let ok: Vec<&CellSummary> =
                summaries.iter().filter(|c| c.scheduler == k.name() && c.error.is_none()).collect();
            if ok.is_empty() {
                return None;
            }
            let n = ok.len() as f64;
            Some(SchedulerSummary {
                scheduler: k.name().to_string(),
                seeds: ok.len(),
                mean_makespan: ok.iter().map(|c| c.mean_makespan).sum::<f64>() / n,
                min_makespan: ok.iter().map(|c| c.min_makespan).min().unwrap_or(0),
                last50_mean_makespan: ok.iter().map(|c| c.last50_mean_makespan).sum::<f64>() / n,
            })
        })
        .collect();

    let mut out = ExperimentOutput {
        rows: Vec::new(),
        records: Vec::new(),
        checkpoints: Vec::new(),
        summary: Summary { cells: summaries, schedulers },
    };
    for cell in cells {
        out.rows.extend(cell.rows);
        out.records.extend(cell.records);
        if let Some(cp) = cell.checkpoint {
            out.checkpoints.push((cell.seed, cp));
        }
    }
    out
}

/// Validates `cfg`, loads its files, runs every cell and writes artifacts to
/// `cfg.out_dir` when set. Cell failures are logged and reported in the
/// summary; only config and output errors are returned as `Err`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let loaded = load_instances(cfg).map_err(|e| e.to_string());
    let output = run_cells(cfg, loaded.as_deref().map_err(Clone::clone));
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(dir, &output)?;
    }
    Ok(output)
}

/// Writes `metrics.jsonl`, `metrics.csv`, `episodes.jsonl`, `summary.json`,
/// `curve.svg` and `checkpoints/drm_seed<S>.json`.
pub fn write_artifacts(dir: &Path, out: &ExperimentOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };

    let mut jsonl = Vec::new();
    for r in &out.rows {
        serde_json::to_writer(&mut jsonl, r).expect("serializable");
        jsonl.push(b'\n');
    }
    write("metrics.jsonl", &jsonl)?;

    let mut csv_out = csv::Writer::from_writer(Vec::new());
    for r in &out.rows {
        csv_out.serialize(r).map_err(|e| HarnessError::Metrics(e.to_string()))?;
    }
    write("metrics.csv", &csv_out.into_inner().map_err(|e| HarnessError::Metrics(e.to_string()))?)?;

    let mut episodes = Vec::new();
    for rec in &out.records {
        writeln!(episodes, "{}", rec.to_json_line()).expect("in-memory write");
    }
    write("episodes.jsonl", &episodes)?;
    write("summary.json", serde_json::to_string_pretty(&out.summary).expect("serializable").as_bytes())?;
    write("curve.svg", emit_curve(&out.rows, None).as_bytes())?;

    if !out.checkpoints.is_empty() {
        let cp_dir = dir.join("checkpoints");
        fs::create_dir_all(&cp_dir).map_err(io_err(&cp_dir))?;
        for (seed, cp) in &out.checkpoints {
            let p = cp_dir.join(format!("drm_seed{seed}.json"));
            fs::write(&p, cp).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

/// Reads metrics written by [`write_artifacts`]: CSV when the extension is
/// `.csv`, JSON lines otherwise.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let bad = |e: String| HarnessError::Metrics(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "csv") {
        let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        return rd.deserialize().collect::<Result<_, _>>().map_err(|e| bad(e.to_string()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| bad(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_mean_window() {
        assert_eq!(tail_mean(&[1, 2, 3, 4], 2), 3.5);
        assert_eq!(tail_mean(&[4, 6], 50), 5.0);
        assert!(tail_mean(&[], 5).is_nan());
    }

    #[test]
    fn agent_seed_offset() {
        let base = DrmConfig { seed: 10, ..DrmConfig::default() };
        assert_eq!(drm_config_for_seed(&base, 3).seed, 13);
        assert_eq!(drm_config_for_seed(&DrmConfig::default(), 4).seed, 4);
    }
}
