//! Heterogeneous SoC task-scheduling workbench.
//!
//! A deterministic discrete-event simulator runs dependency-constrained jobs
//! on heterogeneous processing elements. Schedulers plug in at decision
//! points: three list heuristics ([`heuristics`]) and an actor-critic
//! agent ([`drm`]) built on a small dense network ([`nn`]). The [`harness`]
//! module drives multi-seed experiments and renders charts.

pub mod drm;
pub mod harness;
pub mod heuristics;
pub mod model;
pub mod nn;
pub mod sim;
pub mod spec_io;

pub use model::{Assignment, EpisodeResult, ExecTimes, JobSpec, Ms, PeId, ResourceMatrix, TaskId, TaskSpec};
pub use sim::{run_episode, Scheduler};
