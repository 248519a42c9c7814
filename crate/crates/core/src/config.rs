//! Declarative experiment configuration (TOML, strict schema).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PartitionMode, TriggerSpec};
use crate::error::{Error, Result};
use crate::estimators::ApproxParams;
use crate::fl::{TrainingConfig, ValuationStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionConfig>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub valuation: ValuationConfig,
    #[serde(default)]
    pub experiment: ExperimentSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian clusters; the three splits share class centers.
    Blobs { train: usize, validation: usize, test: usize, features: usize, classes: usize, separation: f64 },
    /// IDX image/label files. Validation and test sets are cut from the test files.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        validation: usize,
    },
    /// Delimited text, label in the last column; the tail rows become validation then test.
    Delimited {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default)]
        header: bool,
        validation: usize,
        test: usize,
    },
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub participants: usize,
    #[serde(default = "default_shards_per_participant")]
    pub shards_per_participant: usize,
}

fn default_shards_per_participant() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    LabelFlip,
    Backdoor,
}

/// Which participants are corrupted: explicit ids, a count or a fraction
/// (the latter two drawn from the corruption stream).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    pub kind: CorruptionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_label: Option<usize>,
    #[serde(default = "default_quota")]
    pub quota: usize,
    #[serde(default = "default_poison_batch")]
    pub batch_size: usize,
}

fn default_quota() -> usize {
    20
}

fn default_poison_batch() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Exact,
    Perm,
    Gt,
    Loo,
    Random,
    None,
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => MethodName::Exact,
            "perm" => MethodName::Perm,
            "gt" => MethodName::Gt,
            "loo" => MethodName::Loo,
            "random" => MethodName::Random,
            "none" => MethodName::None,
            _ => return Err(Error::param(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationConfig {
    #[serde(default = "default_method")]
    pub method: MethodName,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx: Option<ApproxParams>,
    #[serde(default)]
    pub verbose: bool,
}

fn default_method() -> MethodName {
    MethodName::Exact
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig { method: MethodName::Exact, normalized: false, approx: None, verbose: false }
    }
}

impl ValuationConfig {
    pub fn strategy(&self) -> Result<ValuationStrategy> {
        let approx = || {
            self.approx.ok_or_else(|| config_err("valuation.approx", "sampled methods need approximation parameters"))
        };
        Ok(match self.method {
            MethodName::Exact => ValuationStrategy::Exact,
            MethodName::Perm => ValuationStrategy::Permutation(approx()?),
            MethodName::Gt => ValuationStrategy::GroupTesting(approx()?),
            MethodName::Loo => ValuationStrategy::Loo,
            MethodName::Random => ValuationStrategy::Random,
            MethodName::None => ValuationStrategy::None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Shuffles averaged into the random detection baseline.
    #[serde(default = "default_shuffles")]
    pub random_shuffles: usize,
    #[serde(default = "default_fractions")]
    pub dismiss_fractions: Vec<f64>,
    /// Repeats averaged into the random summarization baseline.
    #[serde(default = "default_repeats")]
    pub random_repeats: usize,
}

fn default_shuffles() -> usize {
    100
}

fn default_fractions() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

fn default_repeats() -> usize {
    3
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            random_shuffles: default_shuffles(),
            dismiss_fractions: default_fractions(),
            random_repeats: default_repeats(),
        }
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

fn scoped(path: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Parameter(m) => config_err(path, m),
        other => other,
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let path = e.span().map_or_else(|| "<document>".to_string(), |s| format!("bytes {}..{}", s.start, s.end));
            config_err(&path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<document>", e.to_string()))
    }

    /// Checks the whole document before any compute.
    pub fn validate(&self) -> Result<()> {
        scoped("training", self.training.validate())?;
        let n = self.partition.participants;
        if n == 0 {
            return Err(config_err("partition.participants", "must be at least 1"));
        }
        if self.partition.shards_per_participant == 0 {
            return Err(config_err("partition.shards_per_participant", "must be at least 1"));
        }
        match &self.dataset {
            DatasetSpec::Blobs { train, validation, test, features, classes, separation } => {
                if *train < n || *validation == 0 || *test == 0 {
                    return Err(config_err("dataset", "need train >= participants and non-empty validation/test"));
                }
                if *features == 0 || *classes < 2 || !(separation.is_finite() && *separation >= 0.0) {
                    return Err(config_err("dataset", "need features >= 1, classes >= 2, finite separation"));
                }
            }
            DatasetSpec::Idx { validation, .. } | DatasetSpec::Delimited { validation, .. } if *validation == 0 => {
                return Err(config_err("dataset.validation", "must be at least 1"));
            }
            _ => {}
        }
        if let Some(c) = &self.corruption {
            let chosen = [c.affected.is_some(), c.affected_count.is_some(), c.affected_fraction.is_some()]
                .iter()
                .filter(|&&b| b)
                .count();
            if chosen != 1 {
                return Err(config_err("corruption", "set exactly one of affected, affected_count, affected_fraction"));
            }
            if let Some(f) = c.affected_fraction {
                if !(0.0..=1.0).contains(&f) {
                    return Err(config_err("corruption.affected_fraction", "must lie in [0, 1]"));
                }
            }
            if c.affected_count.is_some_and(|k| k > n) {
                return Err(config_err("corruption.affected_count", "exceeds the participant count"));
            }
            if let Some(ids) = &c.affected {
                if ids.iter().any(|&i| i as usize >= n) {
                    return Err(config_err("corruption.affected", "id outside the participant range"));
                }
            }
            match c.kind {
                CorruptionKind::LabelFlip => match c.flip_ratio {
                    Some(r) if r > 0.0 && r <= 1.0 => {}
                    _ => return Err(config_err("corruption.flip_ratio", "required, in (0, 1]")),
                },
                CorruptionKind::Backdoor => {
                    if c.trigger.is_none() || c.target_label.is_none() {
                        return Err(config_err("corruption", "backdoor needs trigger and target_label"));
                    }
                    if c.batch_size == 0 || c.quota > c.batch_size {
                        return Err(config_err("corruption.quota", "must not exceed a non-empty batch_size"));
                    }
                }
            }
        }
        let strategy = self.valuation.strategy()?;
        if let ValuationStrategy::Permutation(p) | ValuationStrategy::GroupTesting(p) = strategy {
            scoped("valuation.approx", p.validate())?;
            let needed = self.training.metric.range_bound();
            if p.range_bound < needed {
                return Err(config_err(
                    "valuation.approx.range_bound",
                    format!("must be at least the metric's range {needed}"),
                ));
            }
        }
        let s = &self.experiment;
        if s.random_shuffles == 0 || s.random_repeats == 0 {
            return Err(config_err("experiment", "random_shuffles and random_repeats must be at least 1"));
        }
        if s.dismiss_fractions.iter().any(|q| !(0.0..=0.9 + 1e-12).contains(q)) {
            return Err(config_err("experiment.dismiss_fractions", "fractions must lie in [0, 0.9]"));
        }
        Ok(())
    }
}

/// Reads and validates a config file, returning it with the SHA-256 of its bytes.
pub fn parse_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| config_err("<document>", e.to_string()))?;
    Ok((ExperimentConfig::from_toml(text)?, digest(&bytes)))
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
