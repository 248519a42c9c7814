use super::{Coalition, UtilityOracle, ValueVector};
use crate::error::Result;
use crate::par;

/// Federated leave-one-out for one round:
/// `loo_t(i) = U(I_{1:t}) − U(I_{1:t−1} + I_t ∖ {i})`.
pub fn federated_loo_round<O: UtilityOracle + ?Sized>(
    oracle: &O,
    history: &[Coalition],
    round_players: &Coalition,
    round: Option<usize>,
) -> Result<ValueVector> {
    let full = oracle.utility(history, round_players)?;
    let ids = round_players.ids();
    let without = par::try_map_range(ids.len(), |i| oracle.utility(history, &round_players.without(ids[i])))
        .map_err(|(_, e)| e)?;
    Ok(ValueVector::from_pairs(round, ids.iter().copied().zip(without.into_iter().map(|u| full - u))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::{ParticipantId, SetGame};

    #[test]
    fn additive_round_recovers_weights() {
        let w = [1.0, 2.0, 3.0];
        let g = SetGame::new(6.0, move |s: &[ParticipantId]| s.iter().map(|p| w[p.0 as usize]).sum());
        let players = Coalition::from_ids(&[0, 1, 2]).unwrap();
        let v = federated_loo_round(&g, &[], &players, Some(0)).unwrap();
        for i in 0..3u32 {
            // brute force: ν(all) − ν(all ∖ {i})
            let expect = 6.0 - (6.0 - w[i as usize]);
            assert!((v.get(ParticipantId(i)) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn redundant_participant_gets_zero() {
        // utility only depends on whether participant 0 is present
        let g = SetGame::new(1.0, |s: &[ParticipantId]| f64::from(s.contains(&ParticipantId(0))));
        let players = Coalition::from_ids(&[0, 1]).unwrap();
        let v = federated_loo_round(&g, &[], &players, None).unwrap();
        assert_eq!(v.get(ParticipantId(1)), 0.0);
        assert_eq!(v.get(ParticipantId(0)), 1.0);
    }

    #[test]
    fn singleton_round() {
        let g = SetGame::new(1.0, |s: &[ParticipantId]| 0.25 + 0.5 * s.len() as f64);
        let players = Coalition::from_ids(&[4]).unwrap();
        let v = federated_loo_round(&g, &[], &players, None).unwrap();
        assert_eq!(v.get(ParticipantId(4)), 0.75 - 0.25);
    }
}
