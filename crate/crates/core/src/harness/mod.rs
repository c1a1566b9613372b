//! Experiment orchestration: instance generation, multi-seed runs, metrics
//! and charts.

mod charts;
mod config;
mod experiment;
mod generate;

pub use charts::{
    emit_curve, emit_gantt, emit_saliency_map, heat_color, parse_gantt_svg, rolling_mean, GanttFormat, GanttOptions,
    DEFAULT_ROLLING_WINDOW,
};
pub use config::{ConfigError, ExperimentConfig, SchedulerKind, DEFAULT_RANDOMIZE_FRACTION};
pub use experiment::{
    drm_config_for_seed, load_instances, read_metrics, run_cells, run_experiment, tail_mean, write_artifacts,
    CellSummary, ExperimentOutput, HarnessError, Instance, MetricsRow, SchedulerSummary, Summary, SUMMARY_WINDOW,
};
pub use generate::{generate_sample_specs, randomize_resource_matrix, DEFAULT_PES, DEFAULT_TASKS};
