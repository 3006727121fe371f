//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! repeated keys are rejected. [`CliConfig::to_kv`] writes every key, so the
//! output can be fed back through `--config` to repeat a run.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use mtlf_core::ensemble::EnsembleConfig;
use mtlf_core::pipeline::PipelineConfig;
use mtlf_core::training::TrainConfig;

use crate::error::CliError;

pub const KEYS: [&str; 15] = [
    "data",
    "out",
    "seed",
    "threads",
    "verbosity",
    "holdout_years",
    "epochs",
    "lr",
    "tau",
    "state_size",
    "snapshots",
    "subsets",
    "runs",
    "coverage",
    "grad_clip",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub data_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    /// 0 warnings, 1 info, 2 debug, 3 trace.
    pub verbosity: u8,
    /// `None` means the command's own default.
    pub holdout_years: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub state_size: usize,
    pub snapshots: usize,
    pub subsets: usize,
    pub runs: usize,
    pub coverage: usize,
    pub grad_clip: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let ensemble = EnsembleConfig::default();
        Self {
            data_path: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            threads: None,
            verbosity: 0,
            holdout_years: None,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            tau: train.tau,
            state_size: train.state_size,
            snapshots: ensemble.snapshots,
            subsets: ensemble.subsets,
            runs: ensemble.runs,
            coverage: ensemble.coverage,
            grad_clip: train.grad_clip,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::Config(format!("bad value '{raw}' for '{key}': {e}")))
}

impl CliConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let raw = raw.trim();
        match key {
            "data" => self.data_path = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            "out" => self.output_dir = PathBuf::from(raw),
            "seed" => self.seed = parse_value(key, raw)?,
            "threads" => {
                self.threads = match raw {
                    "" | "auto" => None,
                    _ => Some(parse_value(key, raw)?),
                }
            }
            "verbosity" => self.verbosity = parse_value(key, raw)?,
            "holdout_years" => self.holdout_years = Some(parse_value(key, raw)?),
            "epochs" => self.epochs = parse_value(key, raw)?,
            "lr" => self.learning_rate = parse_value(key, raw)?,
            "tau" => self.tau = parse_value(key, raw)?,
            "state_size" => self.state_size = parse_value(key, raw)?,
            "snapshots" => self.snapshots = parse_value(key, raw)?,
            "subsets" => self.subsets = parse_value(key, raw)?,
            "runs" => self.runs = parse_value(key, raw)?,
            "coverage" => self.coverage = parse_value(key, raw)?,
            "grad_clip" => self.grad_clip = parse_value(key, raw)?,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown key '{key}' (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies every setting in `text` on top of `self`.
    pub fn merge_kv(&mut self, text: &str) -> Result<(), CliError> {
        let mut seen = std::collections::BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!(
                    "line {}: key '{key}' given twice",
                    n + 1
                )));
            }
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        config.merge_kv(text)?;
        Ok(config)
    }

    /// Every key, one per line, in [`KEYS`] order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let data = self
            .data_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let threads = self.threads.map_or("auto".to_string(), |t| t.to_string());
        let holdout = self
            .holdout_years
            .map(|h| h.to_string())
            .unwrap_or_default();
        let values = [
            data,
            self.output_dir.display().to_string(),
            self.seed.to_string(),
            threads,
            self.verbosity.to_string(),
            holdout,
            self.epochs.to_string(),
            self.learning_rate.to_string(),
            self.tau.to_string(),
            self.state_size.to_string(),
            self.snapshots.to_string(),
            self.subsets.to_string(),
            self.runs.to_string(),
            self.coverage.to_string(),
            self.grad_clip.to_string(),
        ];
        for (key, value) in KEYS.iter().zip(values) {
            if key == &"holdout_years" && value.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn pipeline(&self, default_holdout: usize) -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                epochs: self.epochs,
                learning_rate: self.learning_rate,
                tau: self.tau,
                state_size: self.state_size,
                snapshots: self.snapshots,
                grad_clip: self.grad_clip,
                seed: self.seed,
            },
            ensemble: EnsembleConfig {
                snapshots: self.snapshots,
                subsets: self.subsets,
                runs: self.runs,
                coverage: self.coverage,
                master_seed: self.seed,
            },
            holdout_years: self.holdout_years.unwrap_or(default_holdout),
        }
    }
}
