//! Random sample instances and resource-matrix jitter.

use rand::Rng;

use crate::model::{JobSpec, Ms, ResourceMatrix, TaskId};

pub const DEFAULT_TASKS: usize = 10;
pub const DEFAULT_PES: usize = 3;
const MAX_LAYER_WIDTH: usize = 3;
const EXTRA_EDGE_PROB: f64 = 0.2;
const EXEC_RANGE: std::ops::RangeInclusive<Ms> = 2..=20;

/// Random layered DAG plus a total resource matrix.
///
/// Tasks are numbered layer by layer. Every task past the first layer gets
/// one predecessor from the layer directly above and, with small
/// probability, extra ones from any earlier layer, so the first layer is
/// exactly the head set. Execution times are uniform in 2..=20 ms.
pub fn generate_sample_specs(n_tasks: usize, n_pes: usize, rng: &mut impl Rng) -> (JobSpec, ResourceMatrix) {
    assert!(n_tasks >= 1 && n_pes >= 1, "need at least one task and one PE");
    let mut layers: Vec<Vec<TaskId>> = Vec::new();
    let mut next = 0;
    while next < n_tasks {
        let width = rng.gen_range(1..=MAX_LAYER_WIDTH).min(n_tasks - next);
        layers.push((next..next + width).collect());
        next += width;
    }
    let mut tasks: Vec<(String, Vec<TaskId>)> = Vec::with_capacity(n_tasks);
    let mut layer_of = Vec::with_capacity(n_tasks);
    for (depth, layer) in layers.iter().enumerate() {
        for &id in layer {
            let mut preds = Vec::new();
            if depth > 0 {
                let above = &layers[depth - 1];
                preds.push(above[rng.gen_range(0..above.len())]);
                for earlier in layers[..depth].iter().flatten() {
                    if !preds.contains(earlier) && rng.gen_bool(EXTRA_EDGE_PROB) {
                        preds.push(*earlier);
                    }
                }
            }
            tasks.push((format!("T{id}"), preds));
            layer_of.push(depth);
        }
    }
    let mut job = JobSpec::from_edges("sample", tasks);
    for (t, depth) in job.tasks.iter_mut().zip(&layer_of) {
        t.earliest_start = 0;
        t.deadline = 100 * (*depth as Ms + 1);
    }
    let times: Vec<Vec<Ms>> = (0..n_tasks).map(|_| (0..n_pes).map(|_| rng.gen_range(EXEC_RANGE)).collect()).collect();
    let rm = ResourceMatrix::from_table(&job, &times);
    (job, rm)
}

/// Replaces every execution time `e` with a uniform integer from
/// `[max(1, round(e·(1−fraction))), round(e·(1+fraction))]`.
pub fn randomize_resource_matrix(rm: &ResourceMatrix, fraction: f64, rng: &mut impl Rng) -> ResourceMatrix {
    assert!((0.0..1.0).contains(&fraction), "fraction must lie in [0, 1)");
    let mut out = rm.clone();
    for r in &mut out.resources {
        for e in r.perf.values_mut() {
            let base = *e as f64;
            let lo = ((base * (1.0 - fraction)).round() as Ms).max(1);
            let hi = ((base * (1.0 + fraction)).round() as Ms).max(lo);
            *e = rng.gen_range(lo..=hi);
        }
    }
    out
}
