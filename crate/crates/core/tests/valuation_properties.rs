use fedsv_core::valuation::{
    exact_federated_round_shapley, exact_shapley, exact_shapley_permutation_form, Coalition, ParticipantId,
    RoundTableOracle, UtilityOracle, ValueVector,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn random_rounds(n: usize, t: usize, rng: &mut ChaCha8Rng) -> Vec<Coalition> {
    (0..t)
        .map(|_| {
            let mask = rng.random_range(1u64..1 << n);
            Coalition::from_ids(&(0..n as u32).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>()).unwrap()
        })
        .collect()
}

/// Random chained tables; `shape` may rewrite each round's table before chaining.
fn tables(rounds: &[Coalition], rng: &mut ChaCha8Rng, shape: impl Fn(usize, &mut Vec<f64>)) -> RoundTableOracle {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (t, r) in rounds.iter().enumerate() {
        let mut tab: Vec<f64> = (0..1usize << r.len()).map(|_| rng.random::<f64>()).collect();
        if let Some(prev) = out.last() {
            tab[0] = *prev.last().unwrap();
        }
        shape(t, &mut tab);
        out.push(tab);
    }
    RoundTableOracle::new(rounds.to_vec(), out, 1.0).unwrap()
}

fn round_values(o: &RoundTableOracle, t: usize) -> ValueVector {
    let rounds = o.rounds();
    exact_federated_round_shapley(o, &rounds[..t], &rounds[t], Some(t)).unwrap()
}

fn game() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=6, 1usize..=3, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_values_sum_to_round_gain((n, t, seed) in game()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rounds = random_rounds(n, t, &mut rng);
        let o = tables(&rounds, &mut rng, |_, _| {});
        for r in 0..t {
            let gain = o.utility(&rounds[..r], &rounds[r]).unwrap() - o.utility(&rounds[..r], &Coalition::empty()).unwrap();
            prop_assert!((round_values(&o, r).sum() - gain).abs() <= TOL);
        }
    }

    #[test]
    fn swapped_players_get_equal_values((n, t, seed) in game()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rounds = random_rounds(n, t, &mut rng);
        // the first two positions of every round with two or more players are interchangeable
        let o = tables(&rounds, &mut rng, |_, tab| {
            if tab.len() >= 4 {
                for mask in 0..tab.len() {
                    let swapped = (mask & !3) | ((mask & 1) << 1) | ((mask >> 1) & 1);
                    if swapped > mask {
                        let avg = (tab[mask] + tab[swapped]) / 2.0;
                        tab[mask] = avg;
                        tab[swapped] = avg;
                    }
                }
            }
        });
        for (r, players) in rounds.iter().enumerate() {
            if players.len() >= 2 {
                let v = round_values(&o, r);
                let (a, b) = (players.ids()[0], players.ids()[1]);
                prop_assert!((v.get(a) - v.get(b)).abs() <= TOL);
            }
        }
    }

    #[test]
    fn null_player_gets_zero((n, t, seed) in game()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rounds = random_rounds(n, t, &mut rng);
        // the last position of every round adds nothing to any coalition
        let o = tables(&rounds, &mut rng, |_, tab| {
            let bit = tab.len() >> 1;
            for mask in 0..tab.len() {
                if mask & bit != 0 {
                    tab[mask] = tab[mask & !bit];
                }
            }
        });
        for (r, players) in rounds.iter().enumerate() {
            let null = *players.ids().last().unwrap();
            prop_assert!(round_values(&o, r).get(null).abs() <= TOL);
        }
    }

    #[test]
    fn values_are_additive((n, t, seed) in game()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rounds = random_rounds(n, t, &mut rng);
        let a = tables(&rounds, &mut rng, |_, _| {});
        let b = tables(&rounds, &mut rng, |_, _| {});
        let sum = a.sum(&b).unwrap();
        for (r, players) in rounds.iter().enumerate() {
            let (va, vb, vs) = (round_values(&a, r), round_values(&b, r), round_values(&sum, r));
            for id in players.ids() {
                prop_assert!((va.get(*id) + vb.get(*id) - vs.get(*id)).abs() <= TOL);
            }
        }
    }

    #[test]
    fn subset_and_permutation_forms_agree(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let players = Coalition::from_ids(&(0..n as u32).collect::<Vec<_>>()).unwrap();
        let o = tables(std::slice::from_ref(&players), &mut rng, |_, _| {});
        let a = exact_shapley(&o, &players).unwrap();
        let b = exact_shapley_permutation_form(&o, &players).unwrap();
        for id in players.ids() {
            prop_assert!((a.get(*id) - b.get(*id)).abs() <= TOL);
        }
    }
}

#[test]
fn values_outside_the_round_are_absent() {
    let rounds = vec![Coalition::from_ids(&[0, 2]).unwrap(), Coalition::from_ids(&[1]).unwrap()];
    let o = RoundTableOracle::random(rounds, 1.0, 5);
    let v = round_values(&o, 1);
    assert_eq!(v.len(), 1);
    assert_eq!(v.get(ParticipantId(0)), 0.0);
}
