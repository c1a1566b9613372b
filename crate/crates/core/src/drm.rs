//! Deep Resource Manager: an actor-critic scheduler that picks a PE for each
//! ready task from an encoding of every task list, not just the ready one.
//!
//! One episode is played with frozen parameters, recording every decision.
//! Afterwards each decision at tick `t` is credited with the discounted sum of
//! a −1 reward per millisecond until the episode ends, and both networks take
//! one optimizer step.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EpisodeResult, ExecTimes, JobSpec, Ms, PeId, TaskId};
use crate::nn::{
    adam_step, log_softmax_temperature, softmax_temperature, AdamConfig, AdamState, DenseNet, Gradients, NnError,
};
use crate::sim::{run_episode_observed, Scheduler, SimError, SimView, TaskStatus};

#[derive(Debug, Error)]
pub enum DrmError {
    #[error("non-finite {which} loss; parameters left unchanged")]
    NonFiniteLoss { which: &'static str },
    #[error("{returns} returns for {decisions} decisions")]
    ReturnCount { returns: usize, decisions: usize },
    #[error("agent was built for {expected:?} (tasks, PEs) but the instance has {found:?}")]
    InstanceShape { expected: (usize, usize), found: (usize, usize) },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmConfig {
    /// Discount per millisecond tick.
    pub gamma: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden: Vec<usize>,
    pub normalize_advantage: bool,
    pub seed: u64,
}

impl Default for DrmConfig {
    fn default() -> Self {
        DrmConfig {
            gamma: 0.99,
            tau0: 5.0,
            tau_min: 0.5,
            tau_decay: 0.995,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            hidden: vec![128, 64],
            normalize_advantage: false,
            seed: 0,
        }
    }
}

impl DrmConfig {
    pub fn validate(&self) -> Result<(), DrmError> {
        let bad = |m: &str| Err(DrmError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau_min > 0.0 && self.tau0 >= self.tau_min) {
            return bad("temperatures need tau0 >= tau_min > 0");
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("tau_decay must lie in (0, 1]");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

/// Softmax temperature for a given training episode:
/// `max(tau_min, tau0 · tau_decay^episode)`.
pub fn temperature(episode: usize, cfg: &DrmConfig) -> f64 {
    let decayed = cfg.tau0 * cfg.tau_decay.powf(episode as f64);
    decayed.max(cfg.tau_min)
}

/// Block layout of the state vector for `N` tasks and `P` PEs:
///
/// | block      | size      | content                                              |
/// |------------|-----------|------------------------------------------------------|
/// | status     | N·4       | one-hot {outstanding, ready, running, completed}     |
/// | assignment | N·(P+1)   | one-hot {none, PE0, …, PE(P−1)}                      |
/// | adjacency  | N·N       | bit `i·N + j` set when task `j` precedes task `i`    |
/// | exec-time  | N·P       | execution time divided by the matrix maximum         |
///
/// A task queued on a PE but not started reads as ready with its PE set, so
/// the task being decided is the first ready task whose assignment is none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingLayout {
    pub num_tasks: usize,
    pub num_pes: usize,
}

impl EncodingLayout {
    pub const STATUS_WIDTH: usize = 4;
    pub const BLOCK_NAMES: [&'static str; 4] = ["status", "assignment", "adjacency", "exec-time"];

    pub fn new(num_tasks: usize, num_pes: usize) -> Self {
        EncodingLayout { num_tasks, num_pes }
    }

    pub fn dim(&self) -> usize {
        let (n, p) = (self.num_tasks, self.num_pes);
        n * (Self::STATUS_WIDTH + p + 1) + n * n + n * p
    }

    /// `(name, index range)` for each block, in vector order.
    pub fn blocks(&self) -> [(&'static str, Range<usize>); 4] {
        let (n, p) = (self.num_tasks, self.num_pes);
        let s = n * Self::STATUS_WIDTH;
        let a = s + n * (p + 1);
        let adj = a + n * n;
        let e = adj + n * p;
        [
            (Self::BLOCK_NAMES[0], 0..s),
            (Self::BLOCK_NAMES[1], s..a),
            (Self::BLOCK_NAMES[2], a..adj),
            (Self::BLOCK_NAMES[3], adj..e),
        ]
    }

    /// Human-readable label for one coordinate, e.g. `status[T3].running`.
    pub fn label(&self, index: usize) -> String {
        let (n, p) = (self.num_tasks, self.num_pes);
        let [(_, st), (_, asg), (_, adj), (_, ex)] = self.blocks();
        if st.contains(&index) {
            let k = index - st.start;
            let names = ["outstanding", "ready", "running", "completed"];
            format!("status[T{}].{}", k / 4, names[k % 4])
        } else if asg.contains(&index) {
            let k = index - asg.start;
            let slot = k % (p + 1);
            let what = if slot == 0 { "none".to_string() } else { format!("PE{}", slot - 1) };
            format!("assignment[T{}].{what}", k / (p + 1))
        } else if adj.contains(&index) {
            let k = index - adj.start;
            format!("adjacency[T{}<-T{}]", k / n, k % n)
        } else if ex.contains(&index) {
            let k = index - ex.start;
            format!("exec[T{}][PE{}]", k / p, k % p)
        } else {
            format!("out-of-range[{index}]")
        }
    }
}

/// Encodes the simulator state seen while deciding for `focus_task`, which
/// must be the first entry of the ready list.
pub fn encode_state(view: &SimView<'_>, focus_task: TaskId) -> Vec<f64> {
    debug_assert_eq!(view.state.ready().first(), Some(&focus_task), "decisions follow ready-list order");
    let n = view.job.len();
    let p = view.exec.num_pes();
    let layout = EncodingLayout::new(n, p);
    let [(_, st), (_, asg), (_, adj), (_, ex)] = layout.blocks();
    let mut x = vec![0.0; layout.dim()];
    let max = view.exec.max().max(1) as f64;
    for task in 0..n {
        let status = match view.state.status(task) {
            TaskStatus::Outstanding => 0,
            TaskStatus::Ready | TaskStatus::Queued => 1,
            TaskStatus::Running => 2,
            TaskStatus::Completed => 3,
        };
        x[st.start + task * 4 + status] = 1.0;
        let slot = view.state.assigned_pe(task).map_or(0, |pe| pe + 1);
        x[asg.start + task * (p + 1) + slot] = 1.0;
        for &pred in &view.job.tasks[task].predecessors {
            x[adj.start + task * n + pred] = 1.0;
        }
        for pe in 0..p {
            x[ex.start + task * p + pe] = view.exec.get(task, pe) as f64 / max;
        }
    }
    x
}

/// Samples a PE from the temperature softmax over the actor's logits and
/// returns it with its natural-log probability.
pub fn select_action(actor: &DenseNet, state: &[f64], tau: f64, rng: &mut impl Rng) -> Result<(PeId, f64), NnError> {
    let logits = actor.predict(state)?;
    let probs = softmax_temperature(&logits, tau);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut action = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            action = i;
            break;
        }
    }
    Ok((action, log_softmax_temperature(&logits, tau, action)))
}

/// Highest-logit PE, lowest index on ties.
pub fn greedy_action(actor: &DenseNet, state: &[f64]) -> Result<PeId, NnError> {
    let logits = actor.predict(state)?;
    let mut best = 0;
    for (i, l) in logits.iter().enumerate() {
        if *l > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub state: Vec<f64>,
    pub action: PeId,
    pub tick: Ms,
    pub log_prob: f64,
    /// Temperature the action was sampled at.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub decisions: Vec<DecisionRecord>,
    /// Ticks until the episode ended (makespan or horizon).
    pub episode_length: Ms,
}

/// Discounted return of every decision under a −1 reward per tick from the
/// decision tick to the end of the episode, accumulated backwards tick by
/// tick (`G_t = −1 + γ·G_{t+1}`, `G_T = 0`).
pub fn compute_returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let end = traj.episode_length;
    let earliest = traj.decisions.iter().map(|d| d.tick.min(end)).min().unwrap_or(end);
    let span = (end - earliest) as usize;
    // by_offset[k] = return with k ticks remaining
    let mut by_offset = Vec::with_capacity(span + 1);
    by_offset.push(0.0);
    for k in 1..=span {
        let next = by_offset[k - 1];
        by_offset.push(-1.0 + gamma * next);
    }
    traj.decisions.iter().map(|d| by_offset[(end - d.tick.min(end)) as usize]).collect()
}

/// Actor loss `−(1/M) Σ log π(a_t|s_t) · A_t` and its parameter gradient.
/// Advantages are treated as constants.
pub fn actor_loss_and_grad(
    actor: &DenseNet,
    decisions: &[DecisionRecord],
    advantages: &[f64],
) -> Result<(f64, Gradients), NnError> {
    let m = decisions.len().max(1) as f64;
    let mut grads = Gradients::zeros_like(actor);
    let mut loss = 0.0;
    for (d, &adv) in decisions.iter().zip(advantages) {
        let (logits, cache) = actor.forward(&d.state)?;
        let probs = softmax_temperature(&logits, d.tau);
        loss -= log_softmax_temperature(&logits, d.tau, d.action) * adv / m;
        // d/dl_i [−A/M · log π_a] = −(A/M)(1/τ)(δ_ia − p_i)
        let k = -adv / (m * d.tau);
        let grad_out: Vec<f64> =
            probs.iter().enumerate().map(|(i, p)| k * (if i == d.action { 1.0 } else { 0.0 } - p)).collect();
        grads.add_scaled(&actor.backward(&cache, &grad_out)?, 1.0);
    }
    Ok((loss, grads))
}

/// Critic loss `(1/M) Σ (G_t − V(s_t))²` and its parameter gradient.
pub fn critic_loss_and_grad(
    critic: &DenseNet,
    states: &[&[f64]],
    returns: &[f64],
) -> Result<(f64, Gradients), NnError> {
    let m = states.len().max(1) as f64;
    let mut grads = Gradients::zeros_like(critic);
    let mut loss = 0.0;
    for (s, &g) in states.iter().zip(returns) {
        let (v, cache) = critic.forward(s)?;
        let err = g - v[0];
        loss += err * err / m;
        grads.add_scaled(&critic.backward(&cache, &[-2.0 * err / m])?, 1.0);
    }
    Ok((loss, grads))
}

/// `|∂ log π(action | state) / ∂ state_i|` at unit temperature.
pub fn input_saliency(actor: &DenseNet, state: &[f64], action: PeId) -> Result<Vec<f64>, NnError> {
    let (logits, cache) = actor.forward(state)?;
    let probs = softmax_temperature(&logits, 1.0);
    let grad_out: Vec<f64> = probs.iter().enumerate().map(|(i, p)| if i == action { 1.0 } else { 0.0 } - p).collect();
    Ok(actor.input_gradient(&cache, &grad_out)?.into_iter().map(f64::abs).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss_actor: f64,
    pub loss_critic: f64,
}

/// One actor step and one critic step from a finished episode.
#[allow(clippy::too_many_arguments)]
pub fn update(
    actor: &mut DenseNet,
    critic: &mut DenseNet,
    actor_opt: &mut AdamState,
    critic_opt: &mut AdamState,
    traj: &Trajectory,
    returns: &[f64],
    cfg: &DrmConfig,
) -> Result<UpdateStats, DrmError> {
    let decisions = &traj.decisions;
    if returns.len() != decisions.len() {
        return Err(DrmError::ReturnCount { returns: returns.len(), decisions: decisions.len() });
    }
    if decisions.is_empty() {
        return Ok(UpdateStats { loss_actor: 0.0, loss_critic: 0.0 });
    }
    let states: Vec<&[f64]> = decisions.iter().map(|d| d.state.as_slice()).collect();
    let mut advantages = Vec::with_capacity(decisions.len());
    for (s, g) in states.iter().zip(returns) {
        advantages.push(g - critic.predict(s)?[0]);
    }
    if cfg.normalize_advantage && advantages.len() > 1 {
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / advantages.len() as f64;
        let sd = var.sqrt().max(1e-8);
        advantages.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }
    let (loss_actor, g_actor) = actor_loss_and_grad(actor, decisions, &advantages)?;
    let (loss_critic, g_critic) = critic_loss_and_grad(critic, &states, returns)?;
    if !loss_actor.is_finite() || !g_actor.is_finite() {
        return Err(DrmError::NonFiniteLoss { which: "actor" });
    }
    if !loss_critic.is_finite() || !g_critic.is_finite() {
        return Err(DrmError::NonFiniteLoss { which: "critic" });
    }
    let base = AdamConfig::default();
    adam_step(actor, &g_actor, actor_opt, &AdamConfig { lr: cfg.lr_actor, ..base })?;
    adam_step(critic, &g_critic, critic_opt, &AdamConfig { lr: cfg.lr_critic, ..base })?;
    Ok(UpdateStats { loss_actor, loss_critic })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionMode {
    Sample { tau: f64 },
    Greedy,
}

/// Scheduler adapter that consults a frozen actor and records each decision.
pub struct DrmPolicy<'a, R: Rng> {
    pub actor: &'a DenseNet,
    pub mode: ActionMode,
    pub rng: &'a mut R,
    pub trajectory: Vec<DecisionRecord>,
    error: Option<NnError>,
}

impl<'a, R: Rng> DrmPolicy<'a, R> {
    pub fn new(actor: &'a DenseNet, mode: ActionMode, rng: &'a mut R) -> Self {
        DrmPolicy { actor, mode, rng, trajectory: Vec::new(), error: None }
    }
}

impl<R: Rng> Scheduler for DrmPolicy<'_, R> {
    fn name(&self) -> &str {
        "drm"
    }

    fn decide(&mut self, view: &SimView<'_>, task: TaskId) -> PeId {
        let state = encode_state(view, task);
        let picked = match self.mode {
            ActionMode::Sample { tau } => select_action(self.actor, &state, tau, self.rng).map(|(a, lp)| (a, lp, tau)),
            ActionMode::Greedy => greedy_action(self.actor, &state).map(|a| (a, 0.0, 1.0)),
        };
        match picked {
            Ok((action, log_prob, tau)) => {
                self.trajectory.push(DecisionRecord { state, action, tick: view.now(), log_prob, tau });
                action
            }
            Err(e) => {
                self.error.get_or_insert(e);
                // An out-of-range PE makes the engine abort the episode.
                usize::MAX
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub result: EpisodeResult,
    pub tau: f64,
    pub loss_actor: f64,
    pub loss_critic: f64,
}

/// Actor and critic networks with their optimizer state and sampling RNG.
#[derive(Debug, Clone)]
pub struct DrmAgent {
    pub cfg: DrmConfig,
    pub layout: EncodingLayout,
    pub actor: DenseNet,
    pub critic: DenseNet,
    actor_opt: AdamState,
    critic_opt: AdamState,
    rng: ChaCha8Rng,
    pub episodes_trained: usize,
}

/// Independent 64-bit seed for a numbered stream, via the splitmix64 finaliser.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl DrmAgent {
    pub fn new(layout: EncodingLayout, cfg: DrmConfig) -> Result<Self, DrmError> {
        cfg.validate()?;
        let mut actor_sizes = vec![layout.dim()];
        actor_sizes.extend(&cfg.hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(layout.num_pes);
        critic_sizes.push(1);
        let actor = DenseNet::new(&actor_sizes, derive_seed(cfg.seed, 1));
        let critic = DenseNet::new(&critic_sizes, derive_seed(cfg.seed, 2));
        Ok(DrmAgent {
            actor_opt: AdamState::new(&actor),
            critic_opt: AdamState::new(&critic),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3)),
            layout,
            actor,
            critic,
            cfg,
            episodes_trained: 0,
        })
    }

    fn check_instance(&self, job: &JobSpec, exec: &ExecTimes) -> Result<(), DrmError> {
        let found = (job.len(), exec.num_pes());
        let expected = (self.layout.num_tasks, self.layout.num_pes);
        if found != expected {
            return Err(DrmError::InstanceShape { expected, found });
        }
        Ok(())
    }

    /// Plays one episode with frozen parameters.
    pub fn play(
        &mut self,
        job: &JobSpec,
        exec: &ExecTimes,
        mode: ActionMode,
        max_simulation_length: Ms,
    ) -> Result<(EpisodeResult, Trajectory), DrmError> {
        self.check_instance(job, exec)?;
        let mut policy = DrmPolicy::new(&self.actor, mode, &mut self.rng);
        let outcome = run_episode_observed(job, exec, &mut policy, max_simulation_length, &mut |_| {});
        if let Some(e) = policy.error.take() {
            return Err(e.into());
        }
        let result = outcome?;
        let traj = Trajectory { decisions: policy.trajectory, episode_length: result.makespan };
        Ok((result, traj))
    }

    /// One training episode at the scheduled temperature followed by one update.
    pub fn train_episode(
        &mut self,
        job: &JobSpec,
        exec: &ExecTimes,
        max_simulation_length: Ms,
    ) -> Result<TrainStats, DrmError> {
        let tau = temperature(self.episodes_trained, &self.cfg);
        let (result, traj) = self.play(job, exec, ActionMode::Sample { tau }, max_simulation_length)?;
        let returns = compute_returns(&traj, self.cfg.gamma);
        let stats = update(
            &mut self.actor,
            &mut self.critic,
            &mut self.actor_opt,
            &mut self.critic_opt,
            &traj,
            &returns,
            &self.cfg,
        )?;
        self.episodes_trained += 1;
        Ok(TrainStats { result, tau, loss_actor: stats.loss_actor, loss_critic: stats.loss_critic })
    }

    pub fn evaluate_greedy(
        &mut self,
        job: &JobSpec,
        exec: &ExecTimes,
        max_simulation_length: Ms,
    ) -> Result<EpisodeResult, DrmError> {
        self.play(job, exec, ActionMode::Greedy, max_simulation_length).map(|(r, _)| r)
    }

    pub fn to_checkpoint(&self) -> String {
        let cp = AgentCheckpoint {
            version: crate::nn::CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            layout: self.layout,
            episodes_trained: self.episodes_trained,
            actor: serde_json::from_str(&self.actor.to_json()).expect("valid json"),
            critic: serde_json::from_str(&self.critic.to_json()).expect("valid json"),
        };
        serde_json::to_string(&cp).expect("serializable")
    }

    /// Restores networks, config and episode counter. Optimizer moments are
    /// not stored and restart from zero.
    pub fn from_checkpoint(text: &str) -> Result<Self, DrmError> {
        let cp: AgentCheckpoint = serde_json::from_str(text).map_err(|e| DrmError::Checkpoint(e.to_string()))?;
        if cp.version != crate::nn::CHECKPOINT_VERSION {
            return Err(DrmError::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        let mut agent = DrmAgent::new(cp.layout, cp.config)?;
        let actor = DenseNet::from_json(&cp.actor.to_string())?;
        let critic = DenseNet::from_json(&cp.critic.to_string())?;
        if actor.input_dim() != cp.layout.dim()
            || actor.output_dim() != cp.layout.num_pes
            || critic.input_dim() != cp.layout.dim()
        {
            return Err(DrmError::Checkpoint("network shapes do not match the encoding layout".into()));
        }
        agent.actor_opt = AdamState::new(&actor);
        agent.critic_opt = AdamState::new(&critic);
        agent.actor = actor;
        agent.critic = critic;
        agent.episodes_trained = cp.episodes_trained;
        Ok(agent)
    }
}

#[derive(Serialize, Deserialize)]
struct AgentCheckpoint {
    version: u32,
    config: DrmConfig,
    layout: EncodingLayout,
    episodes_trained: usize,
    actor: serde_json::Value,
    critic: serde_json::Value,
}

/// Saliency as CSV: `index,block,label,value` with one row per coordinate.
pub fn saliency_csv(layout: &EncodingLayout, saliency: &[f64]) -> String {
    let blocks = layout.blocks();
    let mut out = String::from("index,block,label,value\n");
    for (i, v) in saliency.iter().enumerate() {
        let block = blocks.iter().find(|(_, r)| r.contains(&i)).map_or("?", |(n, _)| n);
        out.push_str(&format!("{i},{block},{},{v:e}\n", layout.label(i)));
    }
    out
}
