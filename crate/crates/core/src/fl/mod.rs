//! Simulated federated averaging with per-round valuation.

mod engine;
mod model;
mod oracle;
mod snapshot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{
    aggregate_subset, participant_update, replay_training, replay_valuation, run_federated_training,
    run_federated_training_with, select_participants, selection_size, value_round, ParticipantUpdate, RoundDiagnostics,
    RoundRecord, TrainingRun, ValuationStrategy,
};
pub use model::{loss_and_grad, mean_loss, predict, Layout, ModelParams};
pub use oracle::{evaluate_utility, make_round_oracle, RoundOracle};
pub use snapshot::{
    read_snapshot_dir, write_round_file, write_snapshot_dir, write_snapshot_meta, Snapshot, SnapshotMeta,
    SNAPSHOT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic,
    Mlp { hidden: usize },
}

impl ModelSpec {
    pub fn layout(&self, inputs: usize, classes: usize) -> Layout {
        match *self {
            ModelSpec::Logistic => Layout::Logistic { inputs, classes },
            ModelSpec::Mlp { hidden } => Layout::Mlp { inputs, hidden, classes },
        }
    }
}

/// Validation metric used as the utility.
///
/// `NegLoss` reports `cap − mean cross-entropy` clamped to `[0, cap]`, so
/// that utilities stay bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Metric {
    Accuracy,
    NegLoss { cap: f64 },
}

impl Metric {
    pub fn range_bound(&self) -> f64 {
        match *self {
            Metric::Accuracy => 1.0,
            Metric::NegLoss { cap } => cap,
        }
    }
}

fn default_decay() -> f64 {
    1.0
}

fn default_metric() -> Metric {
    Metric::Accuracy
}

fn default_model() -> ModelSpec {
    ModelSpec::Logistic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    /// Fraction `C` of participants selected per round.
    pub participant_fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-round multiplicative learning-rate decay; 1 keeps it constant.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "default_metric")]
    pub metric: Metric,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            rounds: 10,
            participant_fraction: 0.5,
            local_epochs: 1,
            batch_size: 16,
            learning_rate: 0.1,
            lr_decay: 1.0,
            model: ModelSpec::Logistic,
            metric: Metric::Accuracy,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("rounds must be at least 1"));
        }
        if !(self.participant_fraction > 0.0 && self.participant_fraction <= 1.0) {
            return Err(Error::param(format!(
                "participant fraction must lie in (0, 1], got {}",
                self.participant_fraction
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("local epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::param(format!("lr decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if let ModelSpec::Mlp { hidden: 0 } = self.model {
            return Err(Error::param("MLP needs at least one hidden unit"));
        }
        if let Metric::NegLoss { cap } = self.metric {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::param("negative-loss cap must be positive"));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, round: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(round as i32)
    }
}
