#![allow(dead_code)]

use std::collections::VecDeque;

use hetsched_core::harness::generate_sample_specs;
use hetsched_core::model::{Assignment, EpisodeResult, ExecTimes, JobSpec, Ms, PeId, ResourceMatrix, TaskId};
use hetsched_core::sim::SimState;
use rand::Rng;

/// Small random instance: either a generated layered DAG or an arbitrary
/// forward-edge DAG, with occasional earliest-start delays.
pub fn random_instance(rng: &mut impl Rng, max_tasks: usize, max_pes: usize) -> (JobSpec, ResourceMatrix) {
    let n = rng.gen_range(1..=max_tasks);
    let p = rng.gen_range(1..=max_pes);
    let (mut job, rm) = if rng.gen_bool(0.5) {
        generate_sample_specs(n, p, rng)
    } else {
        let edges: Vec<(String, Vec<TaskId>)> =
            (0..n).map(|j| (format!("T{j}"), (0..j).filter(|_| rng.gen_bool(0.35)).collect())).collect();
        let job = JobSpec::from_edges("rand", edges);
        let table: Vec<Vec<Ms>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(1..=12)).collect()).collect();
        let rm = ResourceMatrix::from_table(&job, &table);
        (job, rm)
    };
    for t in &mut job.tasks {
        if rng.gen_bool(0.15) {
            t.earliest_start = rng.gen_range(0..=15);
        }
        t.deadline = t.deadline.max(t.earliest_start);
    }
    (job, rm)
}

/// Every vector in `{0..p}^n`, in lexicographic order.
pub fn all_vectors(n: usize, p: usize) -> impl Iterator<Item = Vec<PeId>> {
    let total = p.pow(n as u32);
    (0..total).map(move |mut code| {
        let mut v = vec![0; n];
        for slot in v.iter_mut() {
            *slot = code % p;
            code /= p;
        }
        v
    })
}

/// Millisecond-stepped evaluator, written independently of the event-driven
/// engine. Each tick: completions, then releases (appended to a PE FIFO by
/// the caller), then idle PEs start their queue head.
struct Straight<'a> {
    job: &'a JobSpec,
    exec: &'a ExecTimes,
}

#[derive(Clone)]
struct Tick {
    t: Ms,
    released: Vec<bool>,
    done_at: Vec<Option<Ms>>,
    queues: Vec<VecDeque<TaskId>>,
    running: Vec<Option<(TaskId, Ms)>>,
    out: Vec<Assignment>,
}

impl<'a> Straight<'a> {
    fn start(&self) -> Tick {
        let n = self.job.len();
        let p = self.exec.num_pes();
        Tick {
            t: 0,
            released: vec![false; n],
            done_at: vec![None; n],
            queues: vec![VecDeque::new(); p],
            running: vec![None; p],
            out: Vec::new(),
        }
    }

    /// Completes due tasks and returns the batch released at the current tick.
    fn advance_to_batch(&self, s: &mut Tick) -> Vec<TaskId> {
        for slot in s.running.iter_mut() {
            if let Some((task, fin)) = *slot {
                if fin == s.t {
                    s.done_at[task] = Some(fin);
                    *slot = None;
                }
            }
        }
        let mut batch = Vec::new();
        for (i, task) in self.job.tasks.iter().enumerate() {
            if !s.released[i] && s.t >= task.earliest_start && task.predecessors.iter().all(|&p| s.done_at[p].is_some())
            {
                s.released[i] = true;
                batch.push(i);
            }
        }
        batch
    }

    fn start_idle(&self, s: &mut Tick, assign_tick: &[Ms]) {
        for pe in 0..s.running.len() {
            if s.running[pe].is_none() {
                if let Some(task) = s.queues[pe].pop_front() {
                    let fin = s.t + self.exec.get(task, pe);
                    s.running[pe] = Some((task, fin));
                    s.out.push(Assignment {
                        task_id: task,
                        pe_id: pe,
                        assign_tick: assign_tick[task],
                        start_tick: s.t,
                        finish_tick: fin,
                    });
                }
            }
        }
    }

    fn finished(&self, s: &Tick) -> Option<Ms> {
        s.done_at.iter().all(Option::is_some).then(|| s.done_at.iter().flatten().copied().max().unwrap_or(0))
    }
}

/// Oracle evaluation of a fixed assignment vector with ID-ordered FIFO
/// release. Returns the makespan and schedule, or `None` past `horizon`.
pub fn oracle_makespan(job: &JobSpec, exec: &ExecTimes, vector: &[PeId], horizon: Ms) -> Option<(Ms, Vec<Assignment>)> {
    let sim = Straight { job, exec };
    let mut s = sim.start();
    let mut assign_tick = vec![0; job.len()];
    loop {
        for task in sim.advance_to_batch(&mut s) {
            assign_tick[task] = s.t;
            s.queues[vector[task]].push_back(task);
        }
        sim.start_idle(&mut s, &assign_tick);
        if let Some(m) = sim.finished(&s) {
            return Some((m, s.out));
        }
        if s.t >= horizon {
            return None;
        }
        s.t += 1;
    }
}

/// Minimum makespan over every assignment vector.
pub fn brute_force_optimum(job: &JobSpec, exec: &ExecTimes, horizon: Ms) -> Ms {
    all_vectors(job.len(), exec.num_pes())
        .filter_map(|v| oracle_makespan(job, exec, &v, horizon).map(|r| r.0))
        .min()
        .expect("some vector finishes")
}

/// Minimum over every placement *and* every enqueue order inside each
/// release batch, by depth-first search. This bounds any scheduler that
/// enqueues a batch out of ID order.
pub fn brute_force_any_order(job: &JobSpec, exec: &ExecTimes, horizon: Ms) -> Ms {
    let sim = Straight { job, exec };
    let mut best = Ms::MAX;
    let mut s = sim.start();
    let batch = sim.advance_to_batch(&mut s);
    dfs(&sim, s, batch, &mut vec![0; job.len()], horizon, &mut best);
    best
}

fn dfs(sim: &Straight<'_>, s: Tick, batch: Vec<TaskId>, assign_tick: &mut Vec<Ms>, horizon: Ms, best: &mut Ms) {
    if !batch.is_empty() {
        for (i, &task) in batch.iter().enumerate() {
            let mut rest = batch.clone();
            rest.remove(i);
            for pe in 0..sim.exec.num_pes() {
                let mut next = s.clone();
                next.queues[pe].push_back(task);
                assign_tick[task] = s.t;
                dfs(sim, next, rest.clone(), assign_tick, horizon, best);
            }
        }
        return;
    }
    let mut s = s;
    loop {
        sim.start_idle(&mut s, assign_tick);
        if let Some(m) = sim.finished(&s) {
            *best = (*best).min(m);
            return;
        }
        if s.t >= horizon || s.t >= *best {
            return;
        }
        s.t += 1;
        let batch = sim.advance_to_batch(&mut s);
        if !batch.is_empty() {
            return dfs(sim, s, batch, assign_tick, horizon, best);
        }
    }
}

/// Checks the schedule-level invariants of a completed episode and returns
/// the first violation.
pub fn check_schedule(job: &JobSpec, exec: &ExecTimes, result: &EpisodeResult) -> Result<(), String> {
    let n = job.len();
    let mut by_task: Vec<Option<&Assignment>> = vec![None; n];
    for a in &result.schedule {
        if a.task_id >= n || a.pe_id >= exec.num_pes() {
            return Err(format!("out of range {a:?}"));
        }
        if by_task[a.task_id].replace(a).is_some() {
            return Err(format!("task {} scheduled twice", a.task_id));
        }
        // Non-preemption: one contiguous run of exactly the table time.
        if a.finish_tick - a.start_tick != exec.get(a.task_id, a.pe_id) {
            return Err(format!("task {} ran {}..{} on PE{}", a.task_id, a.start_tick, a.finish_tick, a.pe_id));
        }
        if a.assign_tick > a.start_tick || a.start_tick < job.tasks[a.task_id].earliest_start {
            return Err(format!("task {} started early: {a:?}", a.task_id));
        }
    }
    if !result.terminated_by_timeout {
        if let Some(t) = by_task.iter().position(Option::is_none) {
            return Err(format!("task {t} never ran"));
        }
        let max_finish = result.schedule.iter().map(|a| a.finish_tick).max().unwrap_or(0);
        if max_finish != result.makespan {
            return Err(format!("makespan {} but last finish {max_finish}", result.makespan));
        }
    }
    check_dependencies_and_overlap(
        job,
        &result.schedule.iter().map(|a| (a.pe_id, a.task_id, a.start_tick, a.finish_tick)).collect::<Vec<_>>(),
    )
}

/// Dependency safety and per-PE non-overlap over `(pe, task, start, finish)`.
pub fn check_dependencies_and_overlap(job: &JobSpec, bars: &[(PeId, TaskId, Ms, Ms)]) -> Result<(), String> {
    let finish: std::collections::HashMap<TaskId, Ms> = bars.iter().map(|b| (b.1, b.3)).collect();
    for &(_, task, start, _) in bars {
        for p in &job.tasks[task].predecessors {
            match finish.get(p) {
                Some(&f) if f <= start => {}
                other => return Err(format!("task {task} starts at {start} before predecessor {p} ({other:?})")),
            }
        }
    }
    let mut sorted = bars.to_vec();
    sorted.sort_by_key(|b| (b.0, b.2));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 && w[1].2 < w[0].3 {
            return Err(format!("overlap on PE{}: {:?} and {:?}", w[0].0, w[0], w[1]));
        }
    }
    Ok(())
}

/// Observer check: the task lists partition the task set at every event.
pub fn partition_observer(errors: &mut Vec<String>) -> impl FnMut(&SimState) + '_ {
    move |st: &SimState| {
        if let Err(e) = st.check_partition() {
            errors.push(format!("t={}: {e}", st.now()));
        }
    }
}

pub const SCHEDULERS: [&str; 4] = ["met", "eft", "etf", "drm"];

/// Runs one episode of `scheduler` (a freshly initialised, sampling DRM agent
/// for "drm") while checking the list partition at every event and the
/// schedule invariants at the end.
pub fn checked_episode(job: &JobSpec, exec: &ExecTimes, scheduler: &str, seed: u64) -> Result<EpisodeResult, String> {
    use hetsched_core::drm::{ActionMode, DrmAgent, DrmConfig, DrmPolicy, EncodingLayout};
    use hetsched_core::heuristics::{Eft, Etf, Met};
    use hetsched_core::sim::run_episode_observed;
    use rand::SeedableRng;

    let mut errors = Vec::new();
    let horizon = 5000;
    let result = match scheduler {
        "met" => run_episode_observed(job, exec, &mut Met, horizon, &mut partition_observer(&mut errors)),
        "eft" => run_episode_observed(job, exec, &mut Eft, horizon, &mut partition_observer(&mut errors)),
        "etf" => run_episode_observed(job, exec, &mut Etf, horizon, &mut partition_observer(&mut errors)),
        "drm" => {
            let cfg = DrmConfig { seed, hidden: vec![32, 16], ..DrmConfig::default() };
            let agent =
                DrmAgent::new(EncodingLayout::new(job.len(), exec.num_pes()), cfg).map_err(|e| e.to_string())?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut policy = DrmPolicy::new(&agent.actor, ActionMode::Sample { tau: 1.0 }, &mut rng);
            run_episode_observed(job, exec, &mut policy, horizon, &mut partition_observer(&mut errors))
        }
        other => return Err(format!("unknown scheduler {other}")),
    }
    .map_err(|e| e.to_string())?;
    if let Some(e) = errors.first() {
        return Err(format!("partition: {e}"));
    }
    if result.terminated_by_timeout {
        return Err("timed out".into());
    }
    check_schedule(job, exec, &result)?;
    Ok(result)
}

/// One randomized invariant trial: instance from `seed`, every scheduler,
/// each run twice to confirm determinism.
pub fn invariant_trial(seed: u64) -> Result<(), String> {
    use rand::SeedableRng;
    let (job, rm) = random_instance(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), 12, 4);
    let exec = rm.exec_times(&job).map_err(|e| e.to_string())?;
    for s in SCHEDULERS {
        let a = checked_episode(&job, &exec, s, seed).map_err(|e| format!("{s}, seed {seed}: {e}"))?;
        let b = checked_episode(&job, &exec, s, seed).map_err(|e| format!("{s}, seed {seed}: {e}"))?;
        if a != b {
            return Err(format!("{s}, seed {seed}: rerun differs"));
        }
    }
    Ok(())
}

/// Random job/resource pair with random unique task names and timing
/// metadata, for format round-trips.
pub fn random_spec_pair(rng: &mut impl Rng) -> (JobSpec, ResourceMatrix) {
    let (mut job, rm) = random_instance(rng, 24, 5);
    let exec = rm.exec_times(&job).expect("total matrix");
    let mut names = std::collections::HashSet::new();
    for t in &mut job.tasks {
        let name = loop {
            let len = rng.gen_range(1..=8);
            let s: String = (0..len)
                .map(|_| {
                    *b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_"
                        .get(rng.gen_range(0..63))
                        .unwrap() as char
                })
                .collect();
            if names.insert(s.clone()) {
                break s;
            }
        };
        t.name = name;
        t.earliest_start = rng.gen_range(0..50);
        t.deadline = t.earliest_start + rng.gen_range(0..1000);
    }
    let rows: Vec<Vec<Ms>> = (0..job.len()).map(|t| exec.row(t).to_vec()).collect();
    let rm = ResourceMatrix::from_table(&job, &rows);
    (job, rm)
}

/// write → parse → write must reproduce the text and the values.
pub fn roundtrip(job: &JobSpec, rm: &ResourceMatrix) -> Result<(), String> {
    use hetsched_core::spec_io::{parse_job, parse_resource_matrix, write_job, write_resource_matrix};
    let job_text = write_job(job);
    let rm_text = write_resource_matrix(rm);
    let job2 = parse_job(&job_text).map_err(|e| format!("job: {e}\n{job_text}"))?;
    let rm2 = parse_resource_matrix(&rm_text, &job2).map_err(|e| format!("rm: {e}\n{rm_text}"))?;
    if write_job(&job2) != job_text || write_resource_matrix(&rm2) != rm_text {
        return Err("second write differs".into());
    }
    if &job2 != job || &rm2 != rm {
        return Err("parsed values differ".into());
    }
    Ok(())
}
