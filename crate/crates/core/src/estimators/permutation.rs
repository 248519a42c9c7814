use rand::seq::SliceRandom;

use super::ApproxParams;
use crate::error::{Error, Result};
use crate::par::{self, CompensatedSum};
use crate::seed;
use crate::valuation::{Coalition, UtilityOracle, ValueVector};

/// Number of sampled permutations: `ceil(2r²/ε² · ln(2m/δ))`, at least 1.
pub fn permutation_sample_count(p: &ApproxParams, m: usize) -> Result<usize> {
    p.validate()?;
    if m == 0 {
        return Err(Error::param("permutation sampling needs at least one participant"));
    }
    let r = p.range_bound;
    let t = 2.0 * r * r / (p.epsilon * p.epsilon) * (2.0 * m as f64 / p.delta).ln();
    Ok(ceil_count(t))
}

pub(crate) fn ceil_count(t: f64) -> usize {
    // guard against values like 1.0000000000000002 produced by exact-integer inputs
    let rounded = t.round();
    let t = if (t - rounded).abs() <= 1e-9 * rounded.max(1.0) { rounded } else { t.ceil() };
    (t as usize).max(1)
}

/// Permutation-sampling estimate of the round's federated Shapley value.
///
/// Sample `k` shuffles the round's players with its own generator
/// (`seed`, stream `k`); the marginal gain of each prefix extension is
/// credited to the participant that was added. Every permutation telescopes
/// to `U(history + I_t) − U(history)`, so the estimate does as well.
pub fn permutation_sampling_round<O: UtilityOracle + ?Sized>(
    oracle: &O,
    history: &[Coalition],
    round_players: &Coalition,
    sample_count: usize,
    rng_seed: u64,
    round: Option<usize>,
) -> Result<ValueVector> {
    let players = round_players.ids();
    let m = players.len();
    if m == 0 {
        return Err(Error::param("round has no participants"));
    }
    if sample_count == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    let base = oracle.utility(history, &Coalition::empty())?;

    let samples = par::try_map_range(sample_count, |k| {
        let mut rng = seed::task_rng(rng_seed, k as u64);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let mut marginals = vec![0.0; m];
        let mut prev = base;
        for i in 0..m {
            let prefix = Coalition::from_positions(players, &order[..=i]);
            let u = oracle.utility(history, &prefix)?;
            marginals[order[i]] = u - prev;
            prev = u;
        }
        Ok(marginals)
    })
    .map_err(|(completed, source)| Error::Aborted { completed, total: sample_count, source: Box::new(source) })?;

    let n = sample_count as f64;
    let values = (0..m).map(|i| samples.iter().map(|s| s[i]).collect::<CompensatedSum>().value() / n);
    Ok(ValueVector::from_pairs(round, players.iter().copied().zip(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::{ParticipantId, SetGame};

    #[test]
    fn sample_count_examples() {
        // 200 · ln 400 = 1198.29...
        let p = ApproxParams::new(0.1, 0.05, 1.0);
        assert_eq!(permutation_sample_count(&p, 10).unwrap(), 1199);
        // 2/2 · ln(2/(2/e)) = 1
        let p = ApproxParams::new(2f64.sqrt(), 2.0 / std::f64::consts::E, 1.0);
        assert_eq!(permutation_sample_count(&p, 1).unwrap(), 1);
    }

    #[test]
    fn doubling_range_quadruples_count() {
        let p1 = ApproxParams::new(0.1, 0.05, 1.0);
        let p2 = ApproxParams::new(0.1, 0.05, 2.0);
        let a = permutation_sample_count(&p1, 7).unwrap() as f64;
        let b = permutation_sample_count(&p2, 7).unwrap() as f64;
        assert!((b - 4.0 * a).abs() <= 4.0);
    }

    #[test]
    fn bad_params_rejected() {
        assert!(permutation_sample_count(&ApproxParams::new(0.1, 0.0, 1.0), 3).is_err());
        assert!(permutation_sample_count(&ApproxParams::new(0.1, 0.1, 1.0), 0).is_err());
    }

    #[test]
    fn single_player_is_exact() {
        let g = SetGame::new(1.0, |s: &[ParticipantId]| 0.2 + 0.3 * s.len() as f64);
        let players = Coalition::from_ids(&[5]).unwrap();
        for seed in 0..5 {
            let v = permutation_sampling_round(&g, &[], &players, 3, seed, None).unwrap();
            assert!((v.get(ParticipantId(5)) - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_oracle_gives_zero() {
        let g = SetGame::new(1.0, |_: &[ParticipantId]| 0.4);
        let players = Coalition::from_ids(&[0, 1, 2, 3]).unwrap();
        let v = permutation_sampling_round(&g, &[], &players, 50, 1, None).unwrap();
        assert!(v.iter().all(|(_, x)| x == 0.0));
    }

    #[test]
    fn oracle_failure_reports_progress() {
        struct Failing;
        impl UtilityOracle for Failing {
            fn utility(&self, _: &[Coalition], b: &Coalition) -> Result<f64> {
                if b.len() == 2 {
                    Err(Error::Oracle("nope".into()))
                } else {
                    Ok(0.0)
                }
            }
            fn range_bound(&self) -> f64 {
                1.0
            }
        }
        let players = Coalition::from_ids(&[0, 1, 2]).unwrap();
        match permutation_sampling_round(&Failing, &[], &players, 10, 0, None) {
            Err(Error::Aborted { completed: 0, total: 10, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let g =
            SetGame::new(1.0, |s: &[ParticipantId]| s.iter().map(|p| (p.0 as f64 + 1.0).sqrt()).sum::<f64>() / 10.0);
        let players = Coalition::from_ids(&[0, 3, 4, 8]).unwrap();
        let a = permutation_sampling_round(&g, &[], &players, 100, 9, None).unwrap();
        let b = permutation_sampling_round(&g, &[], &players, 100, 9, None).unwrap();
        let bits = |v: &ValueVector| v.iter().map(|(_, x)| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
