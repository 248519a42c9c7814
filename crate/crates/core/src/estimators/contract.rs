//! Seeded checks of the estimators against brute-force values on random
//! round games.

use serde::{Deserialize, Serialize};

use super::{
    group_testing_plan, group_testing_round, permutation_sample_count, permutation_sampling_round, ApproxParams,
};
use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::valuation::{
    exact_federated_round_shapley, exact_shapley, exact_shapley_permutation_form, Coalition, RoundTableOracle,
    UtilityOracle, ValueVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub method: String,
    pub players: usize,
    pub trials: usize,
    /// Trials whose largest coordinate error stayed within epsilon.
    pub within: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub worst_error: f64,
    /// Largest `|Σ ŝ − (U(full) − U(∅))|` seen (permutation sampling only).
    pub efficiency_gap: Option<f64>,
    pub evaluations_per_trial: usize,
}

impl ContractReport {
    pub fn success_rate(&self) -> f64 {
        self.within as f64 / self.trials as f64
    }

    /// True when at least `1 − delta` of the trials landed within epsilon.
    pub fn holds(&self) -> bool {
        self.success_rate() >= 1.0 - self.delta - 1e-12
    }
}

/// Two rounds over the same `m` players with uniform random utilities; the
/// second round is the one valued, so the history is non-trivial.
pub fn random_round_game(m: usize, range: f64, seed: u64) -> Result<(RoundTableOracle, Vec<Coalition>, Coalition)> {
    if m == 0 || m > 20 {
        return Err(Error::param(format!("random round games need 1..=20 players, got {m}")));
    }
    let players = Coalition::from_ids(&(0..m as u32).collect::<Vec<_>>())?;
    let oracle = RoundTableOracle::random(vec![players.clone(), players.clone()], range, seed);
    Ok((oracle, vec![players.clone()], players))
}

fn max_error(a: &ValueVector, b: &ValueVector) -> f64 {
    a.ids().chain(b.ids()).map(|id| (a.get(id) - b.get(id)).abs()).fold(0.0, f64::max)
}

fn run_trials(
    method: &str,
    m: usize,
    p: &ApproxParams,
    trials: usize,
    seed: u64,
    evaluations_per_trial: usize,
    estimate: impl Fn(&RoundTableOracle, &[Coalition], &Coalition, u64) -> Result<ValueVector> + Sync,
) -> Result<ContractReport> {
    if trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    let game_seed = seed::child(seed, 0);
    let est_seed = seed::child(seed, 1);
    let outcomes = par::try_map_range(trials, |k| {
        let (oracle, history, players) = random_round_game(m, p.range_bound, seed::child(game_seed, k as u64))?;
        let exact = exact_federated_round_shapley(&oracle, &history, &players, None)?;
        let est = estimate(&oracle, &history, &players, seed::child(est_seed, k as u64))?;
        let gap = est.sum() - (oracle.utility(&history, &players)? - oracle.utility(&history, &Coalition::empty())?);
        Ok::<_, Error>((max_error(&est, &exact), gap.abs()))
    })
    .map_err(|(_, e)| e)?;
    Ok(ContractReport {
        method: method.to_string(),
        players: m,
        trials,
        within: outcomes.iter().filter(|(e, _)| *e <= p.epsilon).count(),
        epsilon: p.epsilon,
        delta: p.delta,
        worst_error: outcomes.iter().map(|o| o.0).fold(0.0, f64::max),
        efficiency_gap: Some(outcomes.iter().map(|o| o.1).fold(0.0, f64::max)),
        evaluations_per_trial,
    })
}

/// Permutation sampling with the bound-derived sample count.
pub fn check_permutation_contract(m: usize, p: &ApproxParams, trials: usize, seed: u64) -> Result<ContractReport> {
    let count = permutation_sample_count(p, m)?;
    run_trials("permutation", m, p, trials, seed, count * m, |o, h, s, rs| {
        permutation_sampling_round(o, h, s, count, rs, None)
    })
}

/// Group testing with the bound-derived plan. Its estimates do not
/// telescope exactly, so no efficiency gap is reported.
pub fn check_group_testing_contract(m: usize, p: &ApproxParams, trials: usize, seed: u64) -> Result<ContractReport> {
    let plan = group_testing_plan(m, p)?;
    let mut report = run_trials("group-testing", m, p, trials, seed, plan.total_evaluations(), |o, h, s, rs| {
        Ok(group_testing_round(o, h, s, &plan, rs, None)?.values)
    })?;
    report.efficiency_gap = None;
    Ok(report)
}

/// Largest disagreement between the subset and permutation forms of the
/// exact value over `games` random games of 1..=`max_players` players.
pub fn check_exact_forms(max_players: usize, games: usize, seed: u64) -> Result<f64> {
    let diffs = par::try_map_range(games, |g| {
        let m = 1 + g % max_players.max(1);
        let (oracle, _, players) = random_round_game(m, 1.0, seed::child(seed, g as u64))?;
        let a = exact_shapley(&oracle, &players)?;
        let b = exact_shapley_permutation_form(&oracle, &players)?;
        Ok::<_, Error>(max_error(&a, &b))
    })
    .map_err(|(_, e)| e)?;
    Ok(diffs.into_iter().fold(0.0, f64::max))
}
