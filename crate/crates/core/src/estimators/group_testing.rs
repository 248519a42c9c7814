use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use super::permutation::{ceil_count, permutation_sample_count};
use super::ApproxParams;
use crate::error::{Error, Result};
use crate::par::{self, CompensatedSum};
use crate::seed;
use crate::valuation::{Coalition, UtilityOracle, ValueVector};

/// `h(u) = (1+u)·ln(1+u) − u`.
pub fn h_bernstein(u: f64) -> Result<f64> {
    if u.is_nan() || u <= -1.0 {
        return Err(Error::param(format!("h(u) is defined for u > -1, got {u}")));
    }
    Ok((1.0 + u) * u.ln_1p() - u)
}

/// Sampling design for the group-testing estimator of one round with `m` players.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTestingPlan {
    pub m: usize,
    /// `2 · Σ_{k=1}^{m−1} 1/k`.
    pub z: f64,
    /// `q[k−1]` is the probability of drawing a test of size `k`.
    pub q: Vec<f64>,
    pub q_tot: f64,
    /// Number of tests.
    pub t1: usize,
    /// Number of pivot marginal samples.
    pub t2: usize,
    pub params: ApproxParams,
}

impl GroupTestingPlan {
    pub fn q_of(&self, k: usize) -> f64 {
        self.q[k - 1]
    }

    pub fn total_evaluations(&self) -> usize {
        self.t1 + 2 * self.t2
    }
}

pub fn group_testing_plan(m: usize, p: &ApproxParams) -> Result<GroupTestingPlan> {
    p.validate()?;
    if m < 2 {
        return Err(Error::param(format!("group testing needs at least 2 participants, got {m}")));
    }
    let mf = m as f64;
    let z = 2.0 * (1..m).map(|k| 1.0 / k as f64).sum::<f64>();
    let q: Vec<f64> = (1..m).map(|k| (1.0 / k as f64 + 1.0 / (m - k) as f64) / z).collect();
    let q_tot = (mf - 2.0) / mf * q[0]
        + (2..m)
            .map(|k| {
                let kf = k as f64;
                q[k - 1] * (1.0 + 2.0 * kf * (kf - mf) / (mf * (mf - 1.0)))
            })
            .sum::<f64>();
    if q_tot >= 1.0 {
        return Err(Error::DegeneratePlan { q_tot });
    }
    let r = p.range_bound;
    let shrink = 1.0 - q_tot * q_tot;
    let u = 2.0 * p.epsilon / (z * r * p.c_eps * shrink);
    let t1 = 4.0 / (shrink * h_bernstein(u)?) * (p.c_delta * (mf - 1.0) / (2.0 * p.delta)).ln();
    let t2 = 4.0 * r * r * p.c_eps * p.c_eps / ((p.c_eps - 1.0).powi(2) * p.epsilon * p.epsilon)
        * (2.0 * p.c_delta / ((p.c_delta - 1.0) * p.delta)).ln();
    Ok(GroupTestingPlan { m, z, q, q_tot, t1: ceil_count(t1), t2: ceil_count(t2), params: *p })
}

/// Grid search over `(c_eps, c_delta)` minimizing `T1 + T2`.
pub fn optimize_tradeoff(m: usize, p: &ApproxParams, grid: &[f64]) -> Result<GroupTestingPlan> {
    let mut best: Option<GroupTestingPlan> = None;
    for &ce in grid.iter().filter(|&&c| c > 1.0) {
        for &cd in grid.iter().filter(|&&c| c > 1.0) {
            let plan = group_testing_plan(m, &p.with_tradeoff(ce, cd))?;
            if best.as_ref().is_none_or(|b| plan.t1 + plan.t2 < b.t1 + b.t2) {
                best = Some(plan);
            }
        }
    }
    best.ok_or_else(|| Error::param("tradeoff grid has no value above 1"))
}

/// Membership matrix `A` (tests × players) and test utilities `B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestMatrix {
    pub m: usize,
    membership: Vec<bool>,
    pub utilities: Vec<f64>,
}

impl TestMatrix {
    pub fn tests(&self) -> usize {
        self.utilities.len()
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.membership[t * self.m..(t + 1) * self.m]
    }
}

/// Estimated pairwise differences `C[i][j] ≈ s_i − s_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceMatrix {
    pub m: usize,
    entries: Vec<f64>,
}

impl DifferenceMatrix {
    pub fn zeros(m: usize) -> Self {
        DifferenceMatrix { m, entries: vec![0.0; m * m] }
    }

    /// `C_ij = (Z/T) Σ_t B_t (A_ti − A_tj)`.
    pub fn from_tests(tests: &TestMatrix, z: f64) -> Self {
        let m = tests.m;
        let weighted: Vec<f64> = (0..m)
            .map(|i| {
                (0..tests.tests())
                    .filter(|&t| tests.row(t)[i])
                    .map(|t| tests.utilities[t])
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect();
        let scale = z / tests.tests() as f64;
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                entries[i * m + j] = scale * (weighted[i] - weighted[j]);
            }
        }
        DifferenceMatrix { m, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }
}

#[derive(Debug, Clone)]
pub struct GroupTestingEstimate {
    pub values: ValueVector,
    pub tests: TestMatrix,
    pub differences: DifferenceMatrix,
    pub pivot_estimate: f64,
}

/// Group-testing estimate of the round's federated Shapley value.
///
/// Each test draws a size `k ~ q` and a uniform size-`k` subset of the
/// round's players and records its utility; pairwise differences follow from
/// the tests and are anchored at the highest-id participant by [`diff_to_sv`].
pub fn group_testing_round<O: UtilityOracle + ?Sized>(
    oracle: &O,
    history: &[Coalition],
    round_players: &Coalition,
    plan: &GroupTestingPlan,
    rng_seed: u64,
    round: Option<usize>,
) -> Result<GroupTestingEstimate> {
    let players = round_players.ids();
    let m = players.len();
    if plan.m != m {
        return Err(Error::param(format!("plan built for {} players, round has {m}", plan.m)));
    }
    if plan.q_tot >= 1.0 {
        return Err(Error::DegeneratePlan { q_tot: plan.q_tot });
    }
    let sizes = WeightedIndex::new(&plan.q).map_err(|e| Error::param(e.to_string()))?;
    let test_seed = seed::child(rng_seed, 0);

    let rows = par::try_map_range(plan.t1, |t| {
        let mut rng = seed::task_rng(test_seed, t as u64);
        let k = sizes.sample(&mut rng) + 1;
        let positions = rand::seq::index::sample(&mut rng, m, k).into_vec();
        let mut row = vec![false; m];
        for &i in &positions {
            row[i] = true;
        }
        let b = oracle.utility(history, &Coalition::from_positions(players, &positions))?;
        Ok((row, b))
    })
    .map_err(|(completed, source)| Error::Aborted { completed, total: plan.t1, source: Box::new(source) })?;

    let mut membership = Vec::with_capacity(plan.t1 * m);
    let mut utilities = Vec::with_capacity(plan.t1);
    for (row, b) in rows {
        membership.extend(row);
        utilities.push(b);
    }
    let tests = TestMatrix { m, membership, utilities };
    let differences = DifferenceMatrix::from_tests(&tests, plan.z);
    let (values, pivot_estimate) =
        diff_to_sv(&differences, oracle, history, round_players, plan.t2, seed::child(rng_seed, 1), round)?;
    Ok(GroupTestingEstimate { values, tests, differences, pivot_estimate })
}

/// Recovers values from pairwise differences: samples the pivot's (highest
/// id) value directly from `pivot_samples` marginal contributions, then sets
/// `ŝ_i = ŝ_pivot + C_i,pivot`.
///
/// Coalitions are drawn from the Shapley distribution: a size uniform in
/// `0..=m−1`, then a uniform subset of that size among the other players.
pub fn diff_to_sv<O: UtilityOracle + ?Sized>(
    differences: &DifferenceMatrix,
    oracle: &O,
    history: &[Coalition],
    round_players: &Coalition,
    pivot_samples: usize,
    rng_seed: u64,
    round: Option<usize>,
) -> Result<(ValueVector, f64)> {
    let players = round_players.ids();
    let m = players.len();
    if m == 0 || differences.m != m {
        return Err(Error::param("difference matrix does not match the round"));
    }
    if pivot_samples == 0 {
        return Err(Error::param("pivot sample count must be at least 1"));
    }
    let pivot = m - 1;
    let marginals = par::try_map_range(pivot_samples, |k| {
        let mut rng = seed::task_rng(rng_seed, k as u64);
        let size = rng.random_range(0..m);
        let mut positions = rand::seq::index::sample(&mut rng, m - 1, size).into_vec();
        let without = oracle.utility(history, &Coalition::from_positions(players, &positions))?;
        positions.push(pivot);
        let with = oracle.utility(history, &Coalition::from_positions(players, &positions))?;
        Ok(with - without)
    })
    .map_err(|(completed, source)| Error::Aborted {
        completed,
        total: pivot_samples,
        source: Box::new(source),
    })?;
    let pivot_estimate = marginals.into_iter().collect::<CompensatedSum>().value() / pivot_samples as f64;
    let values = (0..m).map(|i| pivot_estimate + differences.get(i, pivot));
    Ok((ValueVector::from_pairs(round, players.iter().copied().zip(values)), pivot_estimate))
}

/// Evaluation counts of both estimators for one `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub m: usize,
    pub t1: usize,
    pub t2: usize,
    /// `m · T_perm`.
    pub permutation_evaluations: usize,
}

impl ComplexityRow {
    pub fn group_testing_evaluations(&self) -> usize {
        self.t1 + self.t2
    }

    pub fn group_testing_wins(&self) -> bool {
        self.group_testing_evaluations() < self.permutation_evaluations
    }
}

pub fn complexity_table(p: &ApproxParams, ms: &[usize]) -> Result<Vec<ComplexityRow>> {
    ms.iter()
        .map(|&m| {
            let plan = group_testing_plan(m, p)?;
            Ok(ComplexityRow {
                m,
                t1: plan.t1,
                t2: plan.t2,
                permutation_evaluations: m * permutation_sample_count(p, m)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::{ParticipantId, SetGame};

    fn params() -> ApproxParams {
        ApproxParams::new(0.1, 0.2, 1.0)
    }

    #[test]
    fn h_values() {
        assert_eq!(h_bernstein(0.0).unwrap(), 0.0);
        assert!((h_bernstein(1.0).unwrap() - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((h_bernstein(e - 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(h_bernstein(-1.0).is_err());
        assert!(h_bernstein(f64::NAN).is_err());
    }

    #[test]
    fn plan_for_four_players() {
        let plan = group_testing_plan(4, &params()).unwrap();
        assert!((plan.z - 11.0 / 3.0).abs() < 1e-14);
        for (a, b) in plan.q.iter().zip([4.0 / 11.0, 3.0 / 11.0, 4.0 / 11.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((plan.q_tot - 5.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn plan_for_two_players() {
        let plan = group_testing_plan(2, &params()).unwrap();
        assert_eq!(plan.z, 2.0);
        assert_eq!(plan.q, vec![1.0]);
        assert_eq!(plan.q_tot, 0.0);
        assert!(plan.t1 >= 1 && plan.t2 >= 1);
    }

    #[test]
    fn plan_rejects_small_m() {
        assert!(group_testing_plan(1, &params()).is_err());
    }

    #[test]
    fn q_is_symmetric_distribution() {
        for m in 2..60 {
            let plan = group_testing_plan(m, &params()).unwrap();
            assert!((plan.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(plan.q.iter().all(|&x| x > 0.0));
            for k in 1..m {
                assert!((plan.q_of(k) - plan.q_of(m - k)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_differences_give_pivot_everywhere() {
        let g = SetGame::new(1.0, |s: &[ParticipantId]| s.len() as f64 / 3.0);
        let players = Coalition::from_ids(&[0, 1, 2]).unwrap();
        let (v, pivot) = diff_to_sv(&DifferenceMatrix::zeros(3), &g, &[], &players, 64, 1, None).unwrap();
        assert!(v.iter().all(|(_, x)| x == pivot));
        assert!((pivot - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_player_pivot_is_exact() {
        let g = SetGame::new(1.0, |s: &[ParticipantId]| 0.1 + 0.6 * s.len() as f64);
        let players = Coalition::from_ids(&[7]).unwrap();
        let (v, _) = diff_to_sv(&DifferenceMatrix::zeros(1), &g, &[], &players, 5, 3, None).unwrap();
        assert!((v.get(ParticipantId(7)) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn differences_are_antisymmetric_and_consistent() {
        let g =
            SetGame::new(1.0, |s: &[ParticipantId]| s.iter().map(|p| 0.05 * (p.0 as f64 + 1.0)).sum::<f64>().min(1.0));
        let players = Coalition::from_ids(&[0, 1, 2, 3, 4]).unwrap();
        let plan = group_testing_plan(5, &ApproxParams::new(0.3, 0.3, 1.0)).unwrap();
        let est = group_testing_round(&g, &[], &players, &plan, 11, None).unwrap();
        let c = &est.differences;
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(c.get(i, j), -c.get(j, i));
                assert!((c.get(i, j) - (c.get(i, 4) - c.get(j, 4))).abs() < 1e-12);
            }
        }
        for t in 0..est.tests.tests() {
            let k = est.tests.row(t).iter().filter(|&&a| a).count();
            assert!((1..5).contains(&k));
        }
    }

    #[test]
    fn constant_oracle_concentrates_near_zero() {
        let g = SetGame::new(1.0, |_: &[ParticipantId]| 0.5);
        let players = Coalition::from_ids(&[0, 1, 2, 3]).unwrap();
        let plan = group_testing_plan(4, &ApproxParams::new(0.2, 0.2, 1.0)).unwrap();
        let est = group_testing_round(&g, &[], &players, &plan, 5, None).unwrap();
        assert_eq!(est.pivot_estimate, 0.0);
        assert!(est.values.iter().all(|(_, x)| x.abs() < 0.2));
    }

    #[test]
    fn plan_mismatch_refused() {
        let g = SetGame::new(1.0, |_: &[ParticipantId]| 0.5);
        let plan = group_testing_plan(4, &params()).unwrap();
        let players = Coalition::from_ids(&[0, 1, 2]).unwrap();
        assert!(group_testing_round(&g, &[], &players, &plan, 0, None).is_err());
    }

    #[test]
    fn tradeoff_search_is_no_worse_than_default() {
        let p = ApproxParams::new(0.1, 0.1, 1.0);
        let grid: Vec<f64> = (1..=30).map(|i| 1.0 + 0.1 * i as f64).collect();
        let best = optimize_tradeoff(50, &p, &grid).unwrap();
        let default = group_testing_plan(50, &p).unwrap();
        assert!(best.t1 + best.t2 <= default.t1 + default.t2);
    }
}
