//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! job_files = jobs/a.job, jobs/b.job
//! rm_files = rm/a.rm            # one file is broadcast to every job
//! schedulers = met, eft, etf, drm
//! episodes = 1000
//! randomize = true
//! randomize_fraction = 0.3
//! seeds = 0, 1, 2, 3, 4
//! max_simulation_length = 5000
//! out_dir = runs/fixed
//! drm.tau0 = 5.0
//! drm.hidden = 128, 64
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drm::DrmConfig;
use crate::model::Ms;
use crate::sim::DEFAULT_MAX_SIMULATION_LENGTH;

pub const DEFAULT_RANDOMIZE_FRACTION: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Met,
    Eft,
    Etf,
    Drm,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] =
        [SchedulerKind::Met, SchedulerKind::Eft, SchedulerKind::Etf, SchedulerKind::Drm];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Met => "met",
            SchedulerKind::Eft => "eft",
            SchedulerKind::Etf => "etf",
            SchedulerKind::Drm => "drm",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheduler `{s}` (expected met, eft, etf or drm)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub job_files: Vec<PathBuf>,
    pub rm_files: Vec<PathBuf>,
    pub schedulers: Vec<SchedulerKind>,
    pub episodes: usize,
    pub randomize: bool,
    pub randomize_fraction: f64,
    pub seeds: Vec<u64>,
    pub max_simulation_length: Ms,
    /// The agent for experiment seed `s` uses `drm.seed + s`.
    pub drm: DrmConfig,
    /// Artifacts are written here when set.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for everything except the file lists.
    pub fn new(job_files: Vec<PathBuf>, rm_files: Vec<PathBuf>) -> Self {
        ExperimentConfig {
            job_files,
            rm_files,
            schedulers: SchedulerKind::ALL.to_vec(),
            episodes: 1000,
            randomize: false,
            randomize_fraction: DEFAULT_RANDOMIZE_FRACTION,
            seeds: vec![0],
            max_simulation_length: DEFAULT_MAX_SIMULATION_LENGTH,
            drm: DrmConfig::default(),
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.job_files.is_empty() || self.rm_files.is_empty() {
            return bad("job_files and rm_files must be non-empty".into());
        }
        if self.rm_files.len() != 1 && self.rm_files.len() != self.job_files.len() {
            return bad(format!(
                "{} rm files for {} job files; give one per job or a single shared file",
                self.rm_files.len(),
                self.job_files.len()
            ));
        }
        if self.schedulers.is_empty() {
            return bad("schedulers must be non-empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if !(0.0..1.0).contains(&self.randomize_fraction) {
            return bad("randomize_fraction must lie in [0, 1)".into());
        }
        if self.max_simulation_length == 0 {
            return bad("max_simulation_length must be positive".into());
        }
        self.drm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Resource matrix path paired with job `i`.
    pub fn rm_for(&self, i: usize) -> &Path {
        if self.rm_files.len() == 1 {
            &self.rm_files[0]
        } else {
            &self.rm_files[i]
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::new(Vec::new(), Vec::new());
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ConfigError::Line { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) =
                content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            apply(&mut cfg, key, value, base_dir).map_err(err)?;
        }
        if !seen.contains("job_files") {
            return Err(ConfigError::Missing("job_files"));
        }
        if !seen.contains("rm_files") {
            return Err(ConfigError::Missing("rm_files"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn boolean(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{value}` for `{key}`")),
    }
}

fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str, base: &Path) -> Result<(), String> {
    let paths = |v: &str| list(v).into_iter().map(|p| base.join(p)).collect::<Vec<_>>();
    match key {
        "job_files" => cfg.job_files = paths(value),
        "rm_files" => cfg.rm_files = paths(value),
        "schedulers" => cfg.schedulers = list(value).into_iter().map(str::parse).collect::<Result<_, _>>()?,
        "episodes" => cfg.episodes = num(key, value)?,
        "randomize" => cfg.randomize = boolean(key, value)?,
        "randomize_fraction" => cfg.randomize_fraction = num(key, value)?,
        "seeds" => cfg.seeds = list(value).into_iter().map(|s| num(key, s)).collect::<Result<_, _>>()?,
        "max_simulation_length" => cfg.max_simulation_length = num(key, value)?,
        "out_dir" => cfg.out_dir = Some(base.join(value)),
        "drm.gamma" => cfg.drm.gamma = num(key, value)?,
        "drm.tau0" => cfg.drm.tau0 = num(key, value)?,
        "drm.tau_min" => cfg.drm.tau_min = num(key, value)?,
        "drm.tau_decay" => cfg.drm.tau_decay = num(key, value)?,
        "drm.lr_actor" => cfg.drm.lr_actor = num(key, value)?,
        "drm.lr_critic" => cfg.drm.lr_critic = num(key, value)?,
        "drm.hidden" => cfg.drm.hidden = list(value).into_iter().map(|s| num(key, s)).collect::<Result<_, _>>()?,
        "drm.normalize_advantage" => cfg.drm.normalize_advantage = boolean(key, value)?,
        "drm.seed" => cfg.drm.seed = num(key, value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# fixed experiment
job_files = a.job, b.job
rm_files = shared.rm
schedulers = met, drm
episodes = 20
randomize = true
randomize_fraction = 0.25
seeds = 3, 4
max_simulation_length = 900
out_dir = out
drm.hidden = 16
drm.tau0 = 2.0   # warmer start
drm.normalize_advantage = yes
";

    #[test]
    fn parses_every_key() {
        let cfg = ExperimentConfig::parse(FULL, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.job_files, vec![PathBuf::from("/cfg/a.job"), PathBuf::from("/cfg/b.job")]);
        assert_eq!(cfg.rm_for(1), Path::new("/cfg/shared.rm"));
        assert_eq!(cfg.schedulers, vec![SchedulerKind::Met, SchedulerKind::Drm]);
        assert_eq!((cfg.episodes, cfg.randomize, cfg.randomize_fraction), (20, true, 0.25));
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.max_simulation_length, 900);
        assert_eq!(cfg.out_dir, Some(PathBuf::from("/cfg/out")));
        assert_eq!(cfg.drm.hidden, vec![16]);
        assert_eq!(cfg.drm.tau0, 2.0);
        assert!(cfg.drm.normalize_advantage);
        assert_eq!(cfg.drm.gamma, 0.99);
    }

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::parse("job_files = j\nrm_files = r\n", Path::new("")).unwrap();
        assert_eq!(cfg.randomize_fraction, DEFAULT_RANDOMIZE_FRACTION);
        assert_eq!(cfg.max_simulation_length, 5000);
        assert_eq!(cfg.schedulers.len(), 4);
        assert!(!cfg.randomize);
    }

    #[test]
    fn errors() {
        let parse = |t: &str| ExperimentConfig::parse(t, Path::new(""));
        assert_eq!(parse("rm_files = r"), Err(ConfigError::Missing("job_files")));
        assert!(matches!(parse("job_files = j\nrm_files = r\nbogus = 1"), Err(ConfigError::Line { line: 3, .. })));
        assert!(matches!(parse("job_files = j\njob_files = k"), Err(ConfigError::Line { line: 2, .. })));
        assert!(matches!(parse("job_files j"), Err(ConfigError::Line { line: 1, .. })));
        assert!(matches!(
            parse("job_files = j\nrm_files = r\nschedulers = heft"),
            Err(ConfigError::Line { line: 3, .. })
        ));
        assert!(matches!(parse("job_files = j\nrm_files = r\nepisodes = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("job_files = j\nrm_files = r\nrandomize_fraction = 1.0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("job_files = a, b, c\nrm_files = r, s"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("job_files = j\nrm_files = r\ndrm.tau_min = 0"), Err(ConfigError::Invalid(_))));
    }
}
