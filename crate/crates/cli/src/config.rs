//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use graphcoco::eval::{EmbedMode, ProbeSettings};
use graphcoco::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// TUDataset text files `{dir}/{name}_*.txt`.
    Tudataset { dir: PathBuf, name: String },
    Synthetic { n_per_class: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    /// Defaults to one eighth of the embedding width.
    pub top_k: Option<usize>,
    pub embed: EmbedMode,
    pub seed: u64,
    pub probe: ProbeSettings,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            top_k: None,
            embed: EmbedMode::Anchor,
            seed: 0,
            probe: ProbeSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            output_dir: None,
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn check_ratio(path: &str, p: f64) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid(path, format!("ratio must lie in [0, 1), got {p}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every field, reporting the first violation by key path.
    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.train;
        if !(0.0..=1.0).contains(&t.delta) {
            return Err(invalid("train.delta", format!("must lie in [0, 1], got {}", t.delta)));
        }
        if !(t.tau > 0.0 && t.tau.is_finite()) {
            return Err(invalid("train.tau", format!("must be positive, got {}", t.tau)));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(invalid("train.lr", format!("must be positive, got {}", t.lr)));
        }
        for (path, v) in [
            ("train.batch_size", t.batch_size),
            ("train.layers", t.layers),
            ("train.hidden", t.hidden),
            ("train.epochs", t.epochs),
        ] {
            if v == 0 {
                return Err(invalid(path, "must be at least 1"));
            }
        }
        check_ratio("train.policy.first.p", t.policy.first.p)?;
        check_ratio("train.policy.second.p", t.policy.second.p)?;
        if self.eval.folds < 2 {
            return Err(invalid("eval.folds", format!("must be at least 2, got {}", self.eval.folds)));
        }
        if self.eval.top_k == Some(0) {
            return Err(invalid("eval.top_k", "must be at least 1"));
        }
        let p = &self.eval.probe;
        if !(p.reg >= 0.0 && p.reg.is_finite()) {
            return Err(invalid("eval.probe.reg", format!("must be non-negative, got {}", p.reg)));
        }
        if !(p.tol >= 0.0) {
            return Err(invalid("eval.probe.tol", format!("must be non-negative, got {}", p.tol)));
        }
        if let Some(DatasetSpec::Synthetic { n_per_class: 0, .. }) = self.dataset {
            return Err(invalid("dataset.synthetic.n_per_class", "must be at least 1"));
        }
        Ok(())
    }
}
