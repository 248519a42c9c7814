//! Monte Carlo estimators of the per-round federated Shapley value.
//!
//! Two routes: permutation sampling, and group testing of pairwise value
//! differences anchored by one directly sampled pivot value. Sample counts
//! follow the Hoeffding and Bennett bounds so that every coordinate lands
//! within `epsilon` with probability at least `1 - delta`.

mod cache;
mod contract;
mod group_testing;
mod permutation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::CachedOracle;
pub use contract::{
    check_exact_forms, check_group_testing_contract, check_permutation_contract, random_round_game, ContractReport,
};
pub use group_testing::{
    complexity_table, diff_to_sv, group_testing_plan, group_testing_round, h_bernstein, optimize_tradeoff,
    ComplexityRow, DifferenceMatrix, GroupTestingEstimate, GroupTestingPlan, TestMatrix,
};
pub use permutation::{permutation_sample_count, permutation_sampling_round};

/// Accuracy target and tradeoff constants for the sampled estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Utilities lie in `[0, range_bound]`.
    #[serde(default = "default_range")]
    pub range_bound: f64,
    #[serde(default = "default_tradeoff")]
    pub c_eps: f64,
    #[serde(default = "default_tradeoff")]
    pub c_delta: f64,
}

fn default_range() -> f64 {
    1.0
}

fn default_tradeoff() -> f64 {
    2.0
}

impl ApproxParams {
    pub fn new(epsilon: f64, delta: f64, range_bound: f64) -> Self {
        ApproxParams { epsilon, delta, range_bound, c_eps: default_tradeoff(), c_delta: default_tradeoff() }
    }

    pub fn with_tradeoff(mut self, c_eps: f64, c_delta: f64) -> Self {
        self.c_eps = c_eps;
        self.c_delta = c_delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.range_bound > 0.0 && self.range_bound.is_finite()) {
            return Err(Error::param(format!("range bound must be positive, got {}", self.range_bound)));
        }
        if !(self.c_eps > 1.0 && self.c_delta > 1.0) {
            return Err(Error::param(format!(
                "tradeoff constants must exceed 1, got c_eps={} c_delta={}",
                self.c_eps, self.c_delta
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ApproxParams::new(0.1, 0.05, 1.0).validate().is_ok());
        assert!(ApproxParams::new(0.0, 0.05, 1.0).validate().is_err());
        assert!(ApproxParams::new(0.1, 1.0, 1.0).validate().is_err());
        assert!(ApproxParams::new(0.1, 0.5, -1.0).validate().is_err());
        assert!(ApproxParams::new(0.1, 0.5, 1.0).with_tradeoff(1.0, 2.0).validate().is_err());
    }
}
