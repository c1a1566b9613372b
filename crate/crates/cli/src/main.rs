use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hetsched_core::drm::{input_saliency, saliency_csv, ActionMode, DrmAgent};
use hetsched_core::harness::{
    emit_curve, emit_gantt, emit_saliency_map, generate_sample_specs, read_metrics, run_experiment, tail_mean,
    ExperimentConfig, GanttFormat, GanttOptions, HarnessError, SUMMARY_WINDOW,
};
use hetsched_core::sim::{EpisodeRecord, DEFAULT_MAX_SIMULATION_LENGTH};
use hetsched_core::spec_io::{parse_job, parse_resource_matrix, write_job, write_resource_matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "hetsched", version, about = "Heterogeneous SoC task-scheduling workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random layered job and resource matrix.
    Gen {
        #[arg(long, default_value_t = 10)]
        tasks: usize,
        #[arg(long, default_value_t = 3)]
        pes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a key=value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Plot makespan versus episode from a metrics file (.jsonl or .csv).
    Compare {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Trailing rolling-mean window; 1 plots raw values.
        #[arg(long, default_value_t = hetsched_core::harness::DEFAULT_ROLLING_WINDOW)]
        window: usize,
    },
    /// Render one episode of an episodes.jsonl file as a GANTT chart.
    Gantt {
        #[arg(long)]
        result: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Svg)]
        format: Format,
        /// Pick the record with this scheduler name (e.g. etf, drm-greedy).
        #[arg(long)]
        scheduler: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episode: Option<usize>,
        /// Job file, for task names in bar labels.
        #[arg(long)]
        job: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Input-gradient saliency of a trained agent, averaged over the
    /// decisions of one greedy episode.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        rm: PathBuf,
        #[arg(long, default_value = "saliency.svg")]
        out: PathBuf,
        /// Also write the vector as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Svg,
}

/// Exit status 1: the request itself is invalid.
/// Exit status 2: the request was valid but could not be carried out.
enum Failure {
    Config(String),
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn gen(tasks: usize, pes: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    if tasks == 0 || pes == 0 {
        return Err(Failure::Config("--tasks and --pes must be at least 1".into()));
    }
    let (job, rm) = generate_sample_specs(tasks, pes, &mut ChaCha8Rng::seed_from_u64(seed));
    write(&out.join("sample.job"), &write_job(&job))?;
    write(&out.join("sample.rm"), &write_resource_matrix(&rm))?;
    println!("wrote {} and {}", out.join("sample.job").display(), out.join("sample.rm").display());
    Ok(())
}

fn run(config: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    let out = run_experiment(&cfg).map_err(|e| match e {
        HarnessError::Config(c) => Failure::Config(c.to_string()),
        other => runtime(other),
    })?;
    println!("{:<8} {:>6} {:>10} {:>8} {:>12}", "sched", "seeds", "mean", "min", format!("last-{SUMMARY_WINDOW}"));
    for s in &out.summary.schedulers {
        println!(
            "{:<8} {:>6} {:>10.2} {:>8} {:>12.2}",
            s.scheduler, s.seeds, s.mean_makespan, s.min_makespan, s.last50_mean_makespan
        );
    }
    if let Some(dir) = &cfg.out_dir {
        println!("artifacts in {}", dir.display());
    }
    let failed: Vec<String> = out
        .failures()
        .map(|c| format!("seed {} {}: {}", c.seed, c.scheduler, c.error.as_deref().unwrap_or("")))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("{} cell(s) failed:\n  {}", failed.len(), failed.join("\n  "))))
    }
}

fn compare(metrics: &Path, out: &Path, window: usize) -> Result<(), Failure> {
    if window == 0 {
        return Err(Failure::Config("--window must be at least 1".into()));
    }
    let rows = read_metrics(metrics).map_err(runtime)?;
    write(out, &emit_curve(&rows, Some(window)))?;
    let mut names: Vec<&str> = Vec::new();
    for r in &rows {
        if !names.contains(&r.scheduler.as_str()) {
            names.push(&r.scheduler);
        }
    }
    for name in names {
        let mut seeds: Vec<u64> = rows.iter().filter(|r| r.scheduler == name).map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let tails: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let ms: Vec<u64> =
                    rows.iter().filter(|r| r.scheduler == name && r.seed == s).map(|r| r.makespan_ms).collect();
                tail_mean(&ms, SUMMARY_WINDOW)
            })
            .collect();
        println!(
            "{name:<8} last-{SUMMARY_WINDOW} mean over {} seed(s): {:.2}",
            seeds.len(),
            tails.iter().sum::<f64>() / tails.len() as f64
        );
    }
    Ok(())
}

struct GanttArgs<'a> {
    result: &'a Path,
    format: Format,
    scheduler: Option<&'a str>,
    seed: Option<u64>,
    episode: Option<usize>,
    job: Option<&'a Path>,
    out: Option<&'a Path>,
}

fn gantt(a: GanttArgs<'_>) -> Result<(), Failure> {
    let text = read(a.result)?;
    let mut chosen = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: EpisodeRecord =
            serde_json::from_str(line).map_err(|e| runtime(format!("{} line {}: {e}", a.result.display(), i + 1)))?;
        let matches = a.scheduler.is_none_or(|s| rec.scheduler == s)
            && a.seed.is_none_or(|s| rec.seed == s)
            && a.episode.is_none_or(|e| rec.episode == e);
        if matches {
            chosen = Some(rec);
        }
    }
    let rec = chosen.ok_or_else(|| runtime("no episode record matches the selection"))?;
    let job = a.job.map(|p| parse_job(&read(p)?).map_err(|e| runtime(format!("{}: {e}", p.display())))).transpose()?;
    let format = match a.format {
        Format::Text => GanttFormat::Text,
        Format::Svg => GanttFormat::Svg,
    };
    let doc = emit_gantt(&rec.into_result(), format, &GanttOptions { job: job.as_ref(), num_pes: None });
    match a.out {
        Some(p) => write(p, &doc),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn saliency(checkpoint: &Path, job: &Path, rm: &Path, out: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    let mut agent =
        DrmAgent::from_checkpoint(&read(checkpoint)?).map_err(|e| runtime(format!("{}: {e}", checkpoint.display())))?;
    let job = parse_job(&read(job)?).map_err(|e| runtime(format!("{}: {e}", job.display())))?;
    let rm_spec = parse_resource_matrix(&read(rm)?, &job).map_err(|e| runtime(format!("{}: {e}", rm.display())))?;
    let exec = rm_spec.exec_times(&job).map_err(runtime)?;
    let (result, traj) = agent.play(&job, &exec, ActionMode::Greedy, DEFAULT_MAX_SIMULATION_LENGTH).map_err(runtime)?;
    let mut mean = vec![0.0; agent.layout.dim()];
    for d in &traj.decisions {
        let s = input_saliency(&agent.actor, &d.state, d.action).map_err(runtime)?;
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / traj.decisions.len() as f64);
    }
    write(out, &emit_saliency_map(&mean, &agent.layout).map_err(runtime)?)?;
    if let Some(p) = csv {
        write(p, &saliency_csv(&agent.layout, &mean))?;
    }
    println!(
        "greedy makespan {} ms over {} decisions; saliency written to {}",
        result.makespan,
        traj.decisions.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Gen { tasks, pes, seed, out } => gen(*tasks, *pes, *seed, out),
        Command::Run { config } => run(config),
        Command::Compare { metrics, out, window } => compare(metrics, out, *window),
        Command::Gantt { result, format, scheduler, seed, episode, job, out } => gantt(GanttArgs {
            result,
            format: *format,
            scheduler: scheduler.as_deref(),
            seed: *seed,
            episode: *episode,
            job: job.as_deref(),
            out: out.as_deref(),
        }),
        Command::Saliency { checkpoint, job, rm, out, csv } => saliency(checkpoint, job, rm, out, csv.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
