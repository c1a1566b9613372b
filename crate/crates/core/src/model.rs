//! Domain types shared by the simulator, the schedulers and the file formats.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Task identifier, 0-based and contiguous within a job.
pub type TaskId = usize;
/// Processing element identifier, 0-based and contiguous within a resource matrix.
pub type PeId = usize;
/// Simulation time in integer milliseconds.
pub type Ms = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub id: TaskId,
    pub predecessors: BTreeSet<TaskId>,
    pub is_head: bool,
    pub is_tail: bool,
    pub earliest_start: Ms,
    /// Parsed and kept for reporting; never consulted by the scheduler or reward.
    pub deadline: Ms,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, id: TaskId, predecessors: impl IntoIterator<Item = TaskId>) -> Self {
        let predecessors: BTreeSet<TaskId> = predecessors.into_iter().collect();
        TaskSpec {
            name: name.into(),
            id,
            is_head: predecessors.is_empty(),
            is_tail: false,
            predecessors,
            earliest_start: 0,
            deadline: 0,
        }
    }
}

/// A job: a DAG of tasks, stored in task-ID order once validated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub name: String,
    pub tasks: Vec<TaskSpec>,
}

impl JobSpec {
    /// Builds a job from `(name, predecessors)` pairs, assigning IDs in order
    /// and deriving head/tail flags from the edges. Deadlines default to
    /// `u32::MAX` so the timing invariant holds.
    pub fn from_edges<S: Into<String>>(name: impl Into<String>, tasks: Vec<(S, Vec<TaskId>)>) -> Self {
        let tasks = tasks
            .into_iter()
            .enumerate()
            .map(|(id, (n, preds))| {
                let mut t = TaskSpec::new(n, id, preds);
                t.deadline = u32::MAX as Ms;
                t
            })
            .collect();
        let mut job = JobSpec { name: name.into(), tasks };
        job.derive_flags();
        job
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Recomputes `is_head`/`is_tail` from the predecessor relation.
    pub fn derive_flags(&mut self) {
        let has_successor: HashSet<TaskId> = self.tasks.iter().flat_map(|t| t.predecessors.iter().copied()).collect();
        for t in &mut self.tasks {
            t.is_head = t.predecessors.is_empty();
            t.is_tail = !has_successor.contains(&t.id);
        }
    }

    /// Successor lists indexed by task ID. Assumes contiguous IDs.
    pub fn successors(&self) -> Vec<Vec<TaskId>> {
        let mut succ = vec![Vec::new(); self.tasks.len()];
        for t in &self.tasks {
            for &p in &t.predecessors {
                if let Some(s) = succ.get_mut(p) {
                    s.push(t.id);
                }
            }
        }
        succ
    }
}

/// One invariant violation found by [`validate_job`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateId { id: TaskId },
    DuplicateName { name: String },
    IdOutOfRange { id: TaskId, len: usize },
    DanglingPredecessor { task: TaskId, predecessor: TaskId },
    SelfDependency { task: TaskId },
    HeadMismatch { task: TaskId },
    TailMismatch { task: TaskId },
    StartAfterDeadline { task: TaskId },
    Cycle { task: TaskId },
    NoHead,
    NoTail,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate task id {id}"),
            Violation::DuplicateName { name } => write!(f, "duplicate task name {name:?}"),
            Violation::IdOutOfRange { id, len } => {
                write!(f, "task id {id} outside 0..{len}")
            }
            Violation::DanglingPredecessor { task, predecessor } => {
                write!(f, "dangling-predecessor({task},{predecessor})")
            }
            Violation::SelfDependency { task } => write!(f, "task {task} depends on itself"),
            Violation::HeadMismatch { task } => {
                write!(f, "task {task}: HEAD flag must be set exactly when it has no predecessors")
            }
            Violation::TailMismatch { task } => {
                write!(f, "task {task}: TAIL flag must be set exactly when it has no successors")
            }
            Violation::StartAfterDeadline { task } => {
                write!(f, "task {task}: earliest start after deadline")
            }
            Violation::Cycle { task } => write!(f, "cycle detected through task {task}"),
            Violation::NoHead => write!(f, "job has no head task"),
            Violation::NoTail => write!(f, "job has no tail task"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("dependency cycle through task {task}")]
    Cycle { task: TaskId },
    #[error("resource matrix has no execution time for task {task:?} on PE {pe}")]
    MissingExecTime { task: String, pe: PeId },
    #[error("resource matrix entry for task {task:?} on PE {pe} must be at least 1 ms")]
    NonPositiveExecTime { task: String, pe: PeId },
    #[error("resource IDs must be 0-based and contiguous, found {found} at position {position}")]
    ResourceId { position: usize, found: PeId },
    #[error("resource matrix has no processing elements")]
    NoResources,
    #[error("task at position {position} has id {id}; tasks must be stored in ID order")]
    TaskOrder { position: usize, id: TaskId },
}

/// Returns every invariant violation of `job`; an empty list means well-formed.
pub fn validate_job(job: &JobSpec) -> Vec<Violation> {
    let n = job.tasks.len();
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut names = HashSet::new();
    for t in &job.tasks {
        if !ids.insert(t.id) {
            out.push(Violation::DuplicateId { id: t.id });
        }
        if !names.insert(t.name.as_str()) {
            out.push(Violation::DuplicateName { name: t.name.clone() });
        }
        if t.id >= n {
            out.push(Violation::IdOutOfRange { id: t.id, len: n });
        }
    }
    let mut has_successor = HashSet::new();
    for t in &job.tasks {
        for &p in &t.predecessors {
            if p == t.id {
                out.push(Violation::SelfDependency { task: t.id });
            } else if !ids.contains(&p) {
                out.push(Violation::DanglingPredecessor { task: t.id, predecessor: p });
            } else {
                has_successor.insert(p);
            }
        }
    }
    for t in &job.tasks {
        if t.is_head != t.predecessors.is_empty() {
            out.push(Violation::HeadMismatch { task: t.id });
        }
        if t.is_tail == has_successor.contains(&t.id) {
            out.push(Violation::TailMismatch { task: t.id });
        }
        if t.earliest_start > t.deadline {
            out.push(Violation::StartAfterDeadline { task: t.id });
        }
    }
    if let Some(task) = find_cycle(job) {
        out.push(Violation::Cycle { task });
    }
    if !job.tasks.iter().any(|t| t.is_head) {
        out.push(Violation::NoHead);
    }
    if !job.tasks.iter().any(|t| t.is_tail) {
        out.push(Violation::NoTail);
    }
    out
}

/// Kahn's algorithm with a min-heap so simultaneously available tasks come
/// out in ascending ID order.
pub fn topological_order(job: &JobSpec) -> Result<Vec<TaskId>, ModelError> {
    match kahn(job) {
        Ok(order) => Ok(order),
        Err(remaining) => Err(ModelError::Cycle { task: cycle_member(job, &remaining) }),
    }
}

fn find_cycle(job: &JobSpec) -> Option<TaskId> {
    kahn(job).err().map(|remaining| cycle_member(job, &remaining))
}

/// On failure returns the set of task IDs that could not be ordered.
fn kahn(job: &JobSpec) -> Result<Vec<TaskId>, BTreeSet<TaskId>> {
    let ids: HashSet<TaskId> = job.tasks.iter().map(|t| t.id).collect();
    let by_id: std::collections::HashMap<TaskId, &TaskSpec> = job.tasks.iter().map(|t| (t.id, t)).collect();
    let mut indegree: std::collections::HashMap<TaskId, usize> = std::collections::HashMap::new();
    let mut succ: std::collections::HashMap<TaskId, Vec<TaskId>> = std::collections::HashMap::new();
    for t in by_id.values() {
        let preds: Vec<_> = t.predecessors.iter().filter(|p| ids.contains(p)).collect();
        indegree.insert(t.id, preds.len());
        for &p in preds {
            succ.entry(p).or_default().push(t.id);
        }
    }
    let mut heap: BinaryHeap<Reverse<TaskId>> =
        indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| Reverse(id)).collect();
    let mut order = Vec::with_capacity(by_id.len());
    while let Some(Reverse(id)) = heap.pop() {
        order.push(id);
        for &s in succ.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(&s).expect("successor registered");
            *d -= 1;
            if *d == 0 {
                heap.push(Reverse(s));
            }
        }
    }
    if order.len() == by_id.len() {
        Ok(order)
    } else {
        let done: HashSet<TaskId> = order.into_iter().collect();
        Err(ids.difference(&done).copied().collect())
    }
}

/// Walks predecessor links inside the unorderable set until a task repeats;
/// the repeated task lies on a cycle.
fn cycle_member(job: &JobSpec, remaining: &BTreeSet<TaskId>) -> TaskId {
    let by_id: std::collections::HashMap<TaskId, &TaskSpec> = job.tasks.iter().map(|t| (t.id, t)).collect();
    let mut seen = HashSet::new();
    let mut cur = *remaining.iter().next().expect("non-empty remainder");
    loop {
        if !seen.insert(cur) {
            return cur;
        }
        cur = by_id[&cur]
            .predecessors
            .iter()
            .copied()
            .find(|p| remaining.contains(p))
            .expect("every unordered task has an unordered predecessor");
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub id: PeId,
    /// Execution time in ms per task name, in job task-ID order.
    pub perf: IndexMap<String, Ms>,
}

/// Per-PE execution times for every task of the companion job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceMatrix {
    pub resources: Vec<Resource>,
}

impl ResourceMatrix {
    /// Builds a matrix from a task-major table `times[task][pe]`.
    pub fn from_table(job: &JobSpec, times: &[Vec<Ms>]) -> Self {
        let num_pes = times.first().map_or(0, Vec::len);
        let resources = (0..num_pes)
            .map(|pe| Resource {
                id: pe,
                perf: job.tasks.iter().zip(times).map(|(t, row)| (t.name.clone(), row[pe])).collect(),
            })
            .collect();
        ResourceMatrix { resources }
    }

    pub fn num_pes(&self) -> usize {
        self.resources.len()
    }

    /// Resolves task names against `job` into a dense lookup table, checking
    /// totality, positivity and resource-ID contiguity on the way.
    pub fn exec_times(&self, job: &JobSpec) -> Result<ExecTimes, ModelError> {
        if self.resources.is_empty() && !job.is_empty() {
            return Err(ModelError::NoResources);
        }
        for (position, r) in self.resources.iter().enumerate() {
            if r.id != position {
                return Err(ModelError::ResourceId { position, found: r.id });
            }
        }
        let num_pes = self.resources.len();
        let mut data = Vec::with_capacity(job.len() * num_pes);
        for (position, t) in job.tasks.iter().enumerate() {
            if t.id != position {
                return Err(ModelError::TaskOrder { position, id: t.id });
            }
            for r in &self.resources {
                match r.perf.get(&t.name) {
                    None => return Err(ModelError::MissingExecTime { task: t.name.clone(), pe: r.id }),
                    Some(0) => return Err(ModelError::NonPositiveExecTime { task: t.name.clone(), pe: r.id }),
                    Some(&e) => data.push(e),
                }
            }
        }
        Ok(ExecTimes { num_tasks: job.len(), num_pes, data })
    }
}

/// Dense `task × PE` execution-time table resolved from a [`ResourceMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecTimes {
    num_tasks: usize,
    num_pes: usize,
    data: Vec<Ms>,
}

impl ExecTimes {
    /// Task-major table; panics if rows are ragged or empty of PEs.
    pub fn from_rows(rows: &[Vec<Ms>]) -> Self {
        let num_pes = rows.first().map_or(1, Vec::len);
        assert!(num_pes > 0 && rows.iter().all(|r| r.len() == num_pes), "ragged exec table");
        ExecTimes { num_tasks: rows.len(), num_pes, data: rows.concat() }
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_pes(&self) -> usize {
        self.num_pes
    }

    #[inline]
    pub fn get(&self, task: TaskId, pe: PeId) -> Ms {
        self.data[task * self.num_pes + pe]
    }

    pub fn row(&self, task: TaskId) -> &[Ms] {
        &self.data[task * self.num_pes..(task + 1) * self.num_pes]
    }

    pub fn max(&self) -> Ms {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

/// One task's placement in a finished (or truncated) episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    #[serde(rename = "task")]
    pub task_id: TaskId,
    #[serde(rename = "pe")]
    pub pe_id: PeId,
    #[serde(rename = "assign")]
    pub assign_tick: Ms,
    #[serde(rename = "start")]
    pub start_tick: Ms,
    #[serde(rename = "finish")]
    pub finish_tick: Ms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Finish time of the last task, or the simulation horizon on timeout.
    pub makespan: Ms,
    /// Started tasks in start order.
    pub schedule: Vec<Assignment>,
    pub decision_count: usize,
    pub terminated_by_timeout: bool,
}
