use super::{Coalition, ParticipantId, UtilityOracle, ValueVector};
use crate::error::{Error, Result};
use crate::par::{self, CompensatedSum};

/// Largest player count accepted by subset enumeration.
pub const SUBSET_CAP: usize = 20;
/// Largest player count accepted by permutation enumeration.
pub const PERMUTATION_CAP: usize = 8;

/// Canonical Shapley value by enumeration of all subsets.
pub fn exact_shapley<O: UtilityOracle + ?Sized>(oracle: &O, players: &Coalition) -> Result<ValueVector> {
    exact_shapley_with_cap(oracle, players, SUBSET_CAP)
}

pub fn exact_shapley_with_cap<O: UtilityOracle + ?Sized>(
    oracle: &O,
    players: &Coalition,
    cap: usize,
) -> Result<ValueVector> {
    exact_federated_round_shapley_with_cap(oracle, &[], players, None, cap)
}

/// Per-round federated Shapley value: Shapley value of the round's players
/// under the utility conditioned on the realized `history`.
pub fn exact_federated_round_shapley<O: UtilityOracle + ?Sized>(
    oracle: &O,
    history: &[Coalition],
    round_players: &Coalition,
    round: Option<usize>,
) -> Result<ValueVector> {
    exact_federated_round_shapley_with_cap(oracle, history, round_players, round, SUBSET_CAP)
}

pub fn exact_federated_round_shapley_with_cap<O: UtilityOracle + ?Sized>(
    oracle: &O,
    history: &[Coalition],
    round_players: &Coalition,
    round: Option<usize>,
    cap: usize,
) -> Result<ValueVector> {
    let players = round_players.ids();
    let m = players.len();
    let cap = cap.min(SUBSET_CAP);
    if m > cap {
        return Err(Error::EnumerationRefused { players: m, cap, cost: format!("O(2^{m})") });
    }
    let table = subset_table(oracle, history, players)?;
    let weights = subset_weights(m);

    let values = par::map_range(m, |i| {
        let bit = 1usize << i;
        (0..table.len())
            .filter(|mask| mask & bit == 0)
            .map(|mask| weights[mask.count_ones() as usize] * (table[mask | bit] - table[mask]))
            .collect::<CompensatedSum>()
            .value()
    });
    Ok(ValueVector::from_pairs(round, players.iter().copied().zip(values)))
}

/// Canonical Shapley value by averaging marginal contributions over every
/// ordering of the players.
pub fn exact_shapley_permutation_form<O: UtilityOracle + ?Sized>(
    oracle: &O,
    players: &Coalition,
) -> Result<ValueVector> {
    let ids = players.ids();
    let m = ids.len();
    if m > PERMUTATION_CAP {
        return Err(Error::EnumerationRefused { players: m, cap: PERMUTATION_CAP, cost: format!("O({m}!)") });
    }
    let table = subset_table(oracle, &[], ids)?;
    let mut sums = vec![CompensatedSum::default(); m];
    let mut count = 0u64;
    for_each_permutation(m, |order| {
        let mut mask = 0usize;
        for &p in order {
            let next = mask | 1 << p;
            sums[p].add(table[next] - table[mask]);
            mask = next;
        }
        count += 1;
    });
    let n = count.max(1) as f64;
    Ok(ValueVector::from_pairs(None, ids.iter().copied().zip(sums.iter().map(|s| s.value() / n))))
}

/// Utility of `history + S` for every subset `S` of `players`, indexed by bitmask.
fn subset_table<O: UtilityOracle + ?Sized>(
    oracle: &O,
    history: &[Coalition],
    players: &[ParticipantId],
) -> Result<Vec<f64>> {
    let n = 1usize << players.len();
    par::try_map_range(n, |mask| oracle.utility(history, &Coalition::from_mask(players, mask as u64)))
        .map_err(|(_, e)| e)
}

/// `w[k] = 1 / (m · C(m-1, k))`.
fn subset_weights(m: usize) -> Vec<f64> {
    if m == 0 {
        return Vec::new();
    }
    let mut binom = 1.0f64;
    let mut w = Vec::with_capacity(m);
    for k in 0..m {
        w.push(1.0 / (m as f64 * binom));
        binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
    }
    w
}

/// Heap's algorithm over `0..m`. Visits the identity for `m == 0` once.
fn for_each_permutation(m: usize, mut f: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    f(&a);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::SetGame;

    fn ids(n: u32) -> Coalition {
        Coalition::new((0..n).map(ParticipantId)).unwrap()
    }

    #[test]
    fn heap_visits_every_permutation_once() {
        let mut seen = std::collections::BTreeSet::new();
        for_each_permutation(5, |p| {
            assert!(seen.insert(p.to_vec()));
        });
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn weights_match_binomials() {
        let w = subset_weights(4);
        // 1/(4·C(3,k)) for k = 0..3
        let expect = [0.25, 1.0 / 12.0, 1.0 / 12.0, 0.25];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn additive_game() {
        let w = [1.0, 3.0];
        let g = SetGame::new(10.0, move |s: &[ParticipantId]| s.iter().map(|p| w[p.0 as usize]).sum());
        let v = exact_shapley(&g, &ids(2)).unwrap();
        assert!((v.get(ParticipantId(0)) - 1.0).abs() < 1e-12);
        assert!((v.get(ParticipantId(1)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cardinality_game_is_uniform() {
        let g = SetGame::new(3.0, |s: &[ParticipantId]| s.len() as f64);
        let v = exact_shapley(&g, &ids(3)).unwrap();
        for (_, x) in v.iter() {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn glove_style_game() {
        // ν = 1 iff S ⊇ {1,2} or S ⊇ {1,3}; ids here are 0-based.
        let g = SetGame::new(1.0, |s: &[ParticipantId]| {
            let has = |i| s.contains(&ParticipantId(i));
            f64::from(has(0) && (has(1) || has(2)))
        });
        let a = exact_shapley(&g, &ids(3)).unwrap();
        let b = exact_shapley_permutation_form(&g, &ids(3)).unwrap();
        let expect = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for i in 0..3 {
            assert!((a.get(ParticipantId(i)) - expect[i as usize]).abs() < 1e-12);
            assert!((b.get(ParticipantId(i)) - expect[i as usize]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_player_permutation_form() {
        let g = SetGame::new(1.0, |s: &[ParticipantId]| if s.is_empty() { 0.0 } else { 0.7 });
        let v = exact_shapley_permutation_form(&g, &ids(1)).unwrap();
        assert_eq!(v.get(ParticipantId(0)), 0.7);
    }

    #[test]
    fn squared_cardinality_permutation_form() {
        let g = SetGame::new(9.0, |s: &[ParticipantId]| (s.len() * s.len()) as f64);
        let v = exact_shapley_permutation_form(&g, &ids(3)).unwrap();
        for (_, x) in v.iter() {
            assert!((x - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn caps_refuse_enumeration() {
        let g = SetGame::new(1.0, |_: &[ParticipantId]| 0.0);
        match exact_shapley(&g, &ids(21)) {
            Err(Error::EnumerationRefused { players: 21, cap: 20, cost }) => assert!(cost.contains("2^21")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(exact_shapley_permutation_form(&g, &ids(9)), Err(Error::EnumerationRefused { cap: 8, .. })));
        assert!(matches!(exact_shapley_with_cap(&g, &ids(5), 4), Err(Error::EnumerationRefused { cap: 4, .. })));
    }

    #[test]
    fn empty_round_yields_empty_vector() {
        let g = SetGame::new(1.0, |_: &[ParticipantId]| 0.5);
        let v = exact_shapley(&g, &Coalition::empty()).unwrap();
        assert!(v.is_empty());
    }
}
