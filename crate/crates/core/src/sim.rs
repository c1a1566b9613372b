//! Deterministic discrete-event simulator for one job on a set of
//! heterogeneous processing elements.
//!
//! Tasks move `outstanding -> ready -> queued -> running -> completed`. A task
//! becomes ready once all its predecessors completed and its earliest start
//! has passed. At every tick where the ready list is non-empty the scheduler
//! places each ready task on a PE's FIFO queue; idle PEs then start the front
//! of their queue. Between those decision points the scheduler is not called.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::PeView;
use crate::model::{Assignment, EpisodeResult, ExecTimes, JobSpec, ModelError, Ms, PeId, ResourceMatrix, TaskId};

pub const DEFAULT_MAX_SIMULATION_LENGTH: Ms = 5000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scheduler chose PE {pe} for task {task}, but only {num_pes} PEs exist")]
    PeOutOfRange { task: TaskId, pe: PeId, num_pes: usize },
    #[error("task {task} is not waiting for a decision")]
    NotReady { task: TaskId },
    #[error("scheduler left task {task} unassigned at tick {now}")]
    Unassigned { task: TaskId, now: Ms },
    #[error("simulation stalled at tick {now} with unfinished tasks")]
    Stalled { now: Ms },
    #[error("exec table covers {table} tasks but the job has {job}")]
    TableSize { table: usize, job: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskStatus {
    Outstanding,
    Ready,
    /// Assigned to a PE's FIFO queue, not started yet.
    Queued,
    Running,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerDecision {
    pub task_id: TaskId,
    pub pe_id: PeId,
}

/// Complete simulator state. Read-only outside the engine.
#[derive(Debug, Clone)]
pub struct SimState {
    now: Ms,
    outstanding: BTreeSet<TaskId>,
    ready: Vec<TaskId>,
    running: BTreeSet<TaskId>,
    completed: BTreeSet<TaskId>,
    pe_queues: Vec<VecDeque<TaskId>>,
    pe_busy_until: Vec<Ms>,
    /// Task currently executing on each PE.
    pe_current: Vec<Option<TaskId>>,
    status: Vec<TaskStatus>,
    assigned: Vec<Option<PeId>>,
    assign_tick: Vec<Ms>,
    finish_tick: Vec<Option<Ms>>,
    schedule: Vec<Assignment>,
}

impl SimState {
    fn new(num_tasks: usize, num_pes: usize) -> Self {
        SimState {
            now: 0,
            outstanding: (0..num_tasks).collect(),
            ready: Vec::new(),
            running: BTreeSet::new(),
            completed: BTreeSet::new(),
            pe_queues: vec![VecDeque::new(); num_pes],
            pe_busy_until: vec![0; num_pes],
            pe_current: vec![None; num_pes],
            status: vec![TaskStatus::Outstanding; num_tasks],
            assigned: vec![None; num_tasks],
            assign_tick: vec![0; num_tasks],
            finish_tick: vec![None; num_tasks],
            schedule: Vec::new(),
        }
    }

    pub fn now(&self) -> Ms {
        self.now
    }
    pub fn outstanding(&self) -> &BTreeSet<TaskId> {
        &self.outstanding
    }
    /// Ready tasks still waiting for a PE, in decision order.
    pub fn ready(&self) -> &[TaskId] {
        &self.ready
    }
    pub fn running(&self) -> &BTreeSet<TaskId> {
        &self.running
    }
    pub fn completed(&self) -> &BTreeSet<TaskId> {
        &self.completed
    }
    pub fn pe_queues(&self) -> &[VecDeque<TaskId>] {
        &self.pe_queues
    }
    pub fn pe_busy_until(&self) -> &[Ms] {
        &self.pe_busy_until
    }
    pub fn status(&self, task: TaskId) -> TaskStatus {
        self.status[task]
    }
    pub fn assigned_pe(&self, task: TaskId) -> Option<PeId> {
        self.assigned[task]
    }
    pub fn schedule(&self) -> &[Assignment] {
        &self.schedule
    }
    pub fn num_tasks(&self) -> usize {
        self.status.len()
    }
    pub fn num_pes(&self) -> usize {
        self.pe_queues.len()
    }

    /// Checks that the five collections partition all task IDs, agree with
    /// the per-task status, and that no PE holds more than one running task.
    pub fn check_partition(&self) -> Result<(), String> {
        let n = self.num_tasks();
        let mut seen = vec![0u8; n];
        let mut mark = |t: TaskId, expect: TaskStatus, list: &str| -> Result<(), String> {
            if t >= n {
                return Err(format!("{list} holds unknown task {t}"));
            }
            seen[t] += 1;
            if self.status[t] != expect {
                return Err(format!("task {t} in {list} but status {:?}", self.status[t]));
            }
            Ok(())
        };
        for &t in &self.outstanding {
            mark(t, TaskStatus::Outstanding, "outstanding")?;
        }
        for &t in &self.ready {
            mark(t, TaskStatus::Ready, "ready")?;
        }
        for q in &self.pe_queues {
            for &t in q {
                mark(t, TaskStatus::Queued, "pe queue")?;
            }
        }
        for &t in &self.running {
            mark(t, TaskStatus::Running, "running")?;
        }
        for &t in &self.completed {
            mark(t, TaskStatus::Completed, "completed")?;
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            return Err(format!("task {t} appears {} times across the lists", seen[t]));
        }
        let busy = self.pe_current.iter().flatten().count();
        if busy != self.running.len() {
            return Err(format!("{} running tasks but {busy} busy PEs", self.running.len()));
        }
        Ok(())
    }
}

/// What a scheduler may observe at a decision point.
#[derive(Clone, Copy)]
pub struct SimView<'a> {
    pub job: &'a JobSpec,
    pub exec: &'a ExecTimes,
    pub state: &'a SimState,
}

impl SimView<'_> {
    pub fn now(&self) -> Ms {
        self.state.now
    }

    pub fn num_pes(&self) -> usize {
        self.exec.num_pes()
    }

    /// Sum of execution times of tasks waiting in `pe`'s queue.
    pub fn queued_work(&self, pe: PeId) -> Ms {
        self.state.pe_queues[pe].iter().map(|&t| self.exec.get(t, pe)).sum()
    }

    pub fn pe_view(&self) -> PeView {
        let now = self.now();
        PeView {
            busy_until: self.state.pe_busy_until.iter().map(|&b| b.max(now)).collect(),
            queued_work: (0..self.num_pes()).map(|pe| self.queued_work(pe)).collect(),
        }
    }
}

/// Handle given to a scheduler at a decision point. Every task in
/// [`DecisionPoint::ready`] must be assigned before returning.
pub struct DecisionPoint<'a> {
    job: &'a JobSpec,
    exec: &'a ExecTimes,
    state: &'a mut SimState,
    decisions: &'a mut usize,
}

impl DecisionPoint<'_> {
    pub fn ready(&self) -> &[TaskId] {
        &self.state.ready
    }

    pub fn view(&self) -> SimView<'_> {
        SimView { job: self.job, exec: self.exec, state: self.state }
    }

    /// Moves `task` from the ready list to the back of `pe`'s queue.
    pub fn assign(&mut self, task: TaskId, pe: PeId) -> Result<(), SimError> {
        let num_pes = self.exec.num_pes();
        if pe >= num_pes {
            return Err(SimError::PeOutOfRange { task, pe, num_pes });
        }
        let pos = self.state.ready.iter().position(|&t| t == task).ok_or(SimError::NotReady { task })?;
        self.state.ready.remove(pos);
        self.state.status[task] = TaskStatus::Queued;
        self.state.assigned[task] = Some(pe);
        self.state.assign_tick[task] = self.state.now;
        self.state.pe_queues[pe].push_back(task);
        *self.decisions += 1;
        Ok(())
    }
}

pub trait Scheduler {
    fn name(&self) -> &str;

    /// Picks a PE for one ready task. `view` already reflects decisions made
    /// earlier at the same tick.
    fn decide(&mut self, view: &SimView<'_>, task: TaskId) -> PeId;

    /// Handles a whole decision point. The default consults [`Scheduler::decide`]
    /// once per ready task in ready-list order.
    fn schedule(&mut self, point: &mut DecisionPoint<'_>) -> Result<(), SimError> {
        while let Some(&task) = point.ready().first() {
            let pe = self.decide(&point.view(), task);
            point.assign(task, pe)?;
        }
        Ok(())
    }
}

impl<S: Scheduler + ?Sized> Scheduler for &mut S {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn decide(&mut self, view: &SimView<'_>, task: TaskId) -> PeId {
        (**self).decide(view, task)
    }
    fn schedule(&mut self, point: &mut DecisionPoint<'_>) -> Result<(), SimError> {
        (**self).schedule(point)
    }
}

/// Places every task on a predetermined PE.
#[derive(Debug, Clone)]
pub struct FixedAssignment(pub Vec<PeId>);

impl Scheduler for FixedAssignment {
    fn name(&self) -> &str {
        "fixed"
    }
    fn decide(&mut self, _view: &SimView<'_>, task: TaskId) -> PeId {
        self.0[task]
    }
}

pub fn run_episode(
    job: &JobSpec,
    rm: &ResourceMatrix,
    scheduler: &mut dyn Scheduler,
    max_simulation_length: Ms,
) -> Result<EpisodeResult, SimError> {
    let exec = rm.exec_times(job)?;
    run_episode_observed(job, &exec, scheduler, max_simulation_length, &mut |_| {})
}

/// Runs one episode, calling `observer` after every processed event tick.
pub fn run_episode_observed(
    job: &JobSpec,
    exec: &ExecTimes,
    scheduler: &mut dyn Scheduler,
    max_simulation_length: Ms,
    observer: &mut dyn FnMut(&SimState),
) -> Result<EpisodeResult, SimError> {
    let n = job.len();
    if exec.num_tasks() != n {
        return Err(SimError::TableSize { table: exec.num_tasks(), job: n });
    }
    let mut st = SimState::new(n, exec.num_pes());
    let mut decisions = 0usize;
    let mut timed_out = false;

    loop {
        release(job, &mut st);
        if !st.ready.is_empty() {
            let mut point = DecisionPoint { job, exec, state: &mut st, decisions: &mut decisions };
            scheduler.schedule(&mut point)?;
            if let Some(&task) = st.ready.first() {
                return Err(SimError::Unassigned { task, now: st.now });
            }
        }
        start_idle(exec, &mut st);
        observer(&st);

        if st.completed.len() == n {
            break;
        }
        if st.now >= max_simulation_length {
            timed_out = true;
            break;
        }
        let Some(next) = next_event(job, &st) else {
            return Err(SimError::Stalled { now: st.now });
        };
        if next > max_simulation_length {
            st.now = max_simulation_length;
            timed_out = true;
            break;
        }
        st.now = next;
        finish_due(&mut st);
    }

    let makespan =
        if timed_out { max_simulation_length } else { st.finish_tick.iter().flatten().copied().max().unwrap_or(0) };
    Ok(EpisodeResult { makespan, schedule: st.schedule, decision_count: decisions, terminated_by_timeout: timed_out })
}

fn is_eligible(job: &JobSpec, st: &SimState, task: TaskId) -> bool {
    let t = &job.tasks[task];
    st.now >= t.earliest_start && t.predecessors.iter().all(|p| st.completed.contains(p))
}

fn release(job: &JobSpec, st: &mut SimState) {
    let newly: Vec<TaskId> = st.outstanding.iter().copied().filter(|&t| is_eligible(job, st, t)).collect();
    for t in newly {
        st.outstanding.remove(&t);
        st.status[t] = TaskStatus::Ready;
        st.ready.push(t);
    }
}

fn start_idle(exec: &ExecTimes, st: &mut SimState) {
    for pe in 0..st.pe_queues.len() {
        if st.pe_current[pe].is_some() {
            continue;
        }
        let Some(task) = st.pe_queues[pe].pop_front() else { continue };
        let finish = st.now + exec.get(task, pe);
        st.pe_current[pe] = Some(task);
        st.pe_busy_until[pe] = finish;
        st.status[task] = TaskStatus::Running;
        st.running.insert(task);
        st.finish_tick[task] = Some(finish);
        st.schedule.push(Assignment {
            task_id: task,
            pe_id: pe,
            assign_tick: st.assign_tick[task],
            start_tick: st.now,
            finish_tick: finish,
        });
    }
}

/// Earliest future tick at which a running task finishes or a
/// dependency-satisfied outstanding task reaches its earliest start.
fn next_event(job: &JobSpec, st: &SimState) -> Option<Ms> {
    let finishes = st.pe_current.iter().flatten().map(|&t| st.finish_tick[t].expect("running task has finish"));
    let releases = st
        .outstanding
        .iter()
        .map(|&t| &job.tasks[t])
        .filter(|t| t.earliest_start > st.now && t.predecessors.iter().all(|p| st.completed.contains(p)))
        .map(|t| t.earliest_start);
    finishes.chain(releases).min()
}

fn finish_due(st: &mut SimState) {
    for pe in 0..st.pe_current.len() {
        if let Some(t) = st.pe_current[pe] {
            if st.finish_tick[t] == Some(st.now) {
                st.pe_current[pe] = None;
                st.running.remove(&t);
                st.completed.insert(t);
                st.status[t] = TaskStatus::Completed;
            }
        }
    }
}

/// The execution-time metric: makespan when the job completed, otherwise the
/// simulation horizon (which the engine stores as the makespan on timeout).
pub fn elapsed_ticks(result: &EpisodeResult) -> Ms {
    result.makespan
}

/// One JSON-lines record per episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub scheduler: String,
    pub seed: u64,
    pub makespan: Ms,
    pub timeout: bool,
    pub decisions: usize,
    pub schedule: Vec<Assignment>,
}

impl EpisodeRecord {
    pub fn new(episode: usize, scheduler: &str, seed: u64, result: &EpisodeResult) -> Self {
        EpisodeRecord {
            episode,
            scheduler: scheduler.to_string(),
            seed,
            makespan: result.makespan,
            timeout: result.terminated_by_timeout,
            decisions: result.decision_count,
            schedule: result.schedule.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn into_result(self) -> EpisodeResult {
        EpisodeResult {
            makespan: self.makespan,
            schedule: self.schedule,
            decision_count: self.decisions,
            terminated_by_timeout: self.timeout,
        }
    }
}
