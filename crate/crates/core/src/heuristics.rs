//! Baseline list schedulers: minimum execution time (MET), earliest finish
//! time (EFT, first come first served) and earliest task first (ETF, global
//! earliest-finish pair selection). All ties go to the lowest ID.

use crate::model::{ExecTimes, Ms, PeId, TaskId};
use crate::sim::{DecisionPoint, Scheduler, SchedulerDecision, SimError, SimView};

/// Per-PE load as seen from a decision point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeView {
    pub busy_until: Vec<Ms>,
    /// Sum of execution times of tasks queued on the PE but not started.
    pub queued_work: Vec<Ms>,
}

impl PeView {
    pub fn idle(num_pes: usize, now: Ms) -> Self {
        PeView { busy_until: vec![now; num_pes], queued_work: vec![0; num_pes] }
    }

    /// Finish time of `task` if appended to `pe`'s queue now.
    pub fn est_finish(&self, exec: &ExecTimes, task: TaskId, pe: PeId, now: Ms) -> Ms {
        self.busy_until[pe].max(now) + self.queued_work[pe] + exec.get(task, pe)
    }
}

fn argmin_by_key(n: usize, key: impl Fn(usize) -> Ms) -> usize {
    // min_by_key keeps the first minimum, which is the lowest index.
    (0..n).min_by_key(|&i| key(i)).expect("at least one PE")
}

pub fn met_decide(task: TaskId, exec: &ExecTimes) -> PeId {
    argmin_by_key(exec.num_pes(), |pe| exec.get(task, pe))
}

pub fn eft_decide(task: TaskId, view: &PeView, exec: &ExecTimes, now: Ms) -> PeId {
    argmin_by_key(exec.num_pes(), |pe| view.est_finish(exec, task, pe, now))
}

/// Repeatedly commits the (task, PE) pair with the smallest estimated finish
/// over all remaining ready tasks, updating the view after each pick.
pub fn etf_decide_batch(ready: &[TaskId], view: &PeView, exec: &ExecTimes, now: Ms) -> Vec<SchedulerDecision> {
    let mut view = view.clone();
    let mut remaining: Vec<TaskId> = ready.to_vec();
    remaining.sort_unstable();
    let mut out = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let (idx, pe, _) = remaining
            .iter()
            .enumerate()
            .flat_map(|(i, &t)| (0..exec.num_pes()).map(move |pe| (i, pe, t)))
            .map(|(i, pe, t)| (i, pe, view.est_finish(exec, t, pe, now)))
            .min_by_key(|&(i, pe, f)| (f, remaining[i], pe))
            .expect("non-empty");
        let task = remaining.remove(idx);
        view.queued_work[pe] += exec.get(task, pe);
        out.push(SchedulerDecision { task_id: task, pe_id: pe });
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Met;

impl Scheduler for Met {
    fn name(&self) -> &str {
        "met"
    }
    fn decide(&mut self, view: &SimView<'_>, task: TaskId) -> PeId {
        met_decide(task, view.exec)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Eft;

impl Scheduler for Eft {
    fn name(&self) -> &str {
        "eft"
    }
    fn decide(&mut self, view: &SimView<'_>, task: TaskId) -> PeId {
        eft_decide(task, &view.pe_view(), view.exec, view.now())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Etf;

impl Scheduler for Etf {
    fn name(&self) -> &str {
        "etf"
    }
    fn decide(&mut self, view: &SimView<'_>, task: TaskId) -> PeId {
        eft_decide(task, &view.pe_view(), view.exec, view.now())
    }
    fn schedule(&mut self, point: &mut DecisionPoint<'_>) -> Result<(), SimError> {
        let decisions = {
            let view = point.view();
            etf_decide_batch(point.ready(), &view.pe_view(), view.exec, view.now())
        };
        for d in decisions {
            point.assign(d.task_id, d.pe_id)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, JobSpec};
    use crate::sim::run_episode_observed;

    fn fork() -> (JobSpec, ExecTimes) {
        let job = JobSpec::from_edges("fork", vec![("A", vec![]), ("B", vec![0]), ("C", vec![0])]);
        (job, ExecTimes::from_rows(&[vec![2, 3], vec![3, 2], vec![4, 2]]))
    }

    fn by_task(mut s: Vec<Assignment>) -> Vec<(PeId, Ms, Ms)> {
        s.sort_by_key(|a| a.task_id);
        s.into_iter().map(|a| (a.pe_id, a.start_tick, a.finish_tick)).collect()
    }

    #[test]
    fn met_argmin_and_ties() {
        assert_eq!(met_decide(0, &ExecTimes::from_rows(&[vec![4, 2, 7]])), 1);
        assert_eq!(met_decide(0, &ExecTimes::from_rows(&[vec![3, 3]])), 0);
        let (_, exec) = fork();
        assert_eq!((met_decide(1, &exec), met_decide(2, &exec)), (1, 1));
    }

    #[test]
    fn eft_formula() {
        let (_, exec) = fork();
        let mut view = PeView::idle(2, 2);
        assert_eq!(eft_decide(1, &view, &exec, 2), 1);
        view.queued_work[1] += 2;
        // C finishes at 6 on either PE; the tie goes to PE0.
        assert_eq!(view.est_finish(&exec, 2, 0, 2), 6);
        assert_eq!(view.est_finish(&exec, 2, 1, 2), 6);
        assert_eq!(eft_decide(2, &view, &exec, 2), 0);
        let one = ExecTimes::from_rows(&[vec![9]]);
        assert_eq!(eft_decide(0, &PeView { busy_until: vec![100], queued_work: vec![50] }, &one, 0), 0);
    }

    #[test]
    fn etf_batch() {
        let (_, exec) = fork();
        let d = etf_decide_batch(&[1, 2], &PeView::idle(2, 2), &exec, 2);
        assert_eq!(d, vec![SchedulerDecision { task_id: 1, pe_id: 1 }, SchedulerDecision { task_id: 2, pe_id: 0 }]);
        // Single ready task degenerates to EFT.
        let view = PeView { busy_until: vec![5, 2], queued_work: vec![0, 4] };
        let d = etf_decide_batch(&[2], &view, &exec, 2);
        assert_eq!(d, vec![SchedulerDecision { task_id: 2, pe_id: eft_decide(2, &view, &exec, 2) }]);
    }

    #[test]
    fn etf_equal_times_round_robin() {
        let exec = ExecTimes::from_rows(&vec![vec![5, 5]; 4]);
        let d: Vec<_> = etf_decide_batch(&[3, 1, 0, 2], &PeView::idle(2, 0), &exec, 0)
            .into_iter()
            .map(|d| (d.task_id, d.pe_id))
            .collect();
        assert_eq!(d, vec![(0, 0), (1, 1), (2, 0), (3, 1)]);
    }

    #[test]
    fn simulated_fork_instance() {
        let (job, exec) = fork();
        let run = |s: &mut dyn Scheduler| run_episode_observed(&job, &exec, s, 5000, &mut |_| {}).unwrap();
        let met = run(&mut Met);
        assert_eq!(by_task(met.schedule), vec![(0, 0, 2), (1, 2, 4), (1, 4, 6)]);
        assert_eq!(met.makespan, 6);
        let eft = run(&mut Eft);
        assert_eq!(by_task(eft.schedule), vec![(0, 0, 2), (1, 2, 4), (0, 2, 6)]);
        assert_eq!(eft.makespan, 6);
        let etf = run(&mut Etf);
        assert_eq!(etf.makespan, 6);
    }
}
