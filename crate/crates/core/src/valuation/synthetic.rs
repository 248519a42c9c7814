//! Table-driven utility oracles for tests and the exact-check suite.

use rand::Rng;

use super::{Coalition, ParticipantId, UtilityOracle};
use crate::error::{Error, Result};
use crate::seed;

/// A canonical cooperative game given by a set function. The history is ignored.
pub struct SetGame<F> {
    f: F,
    range: f64,
}

impl<F> SetGame<F>
where
    F: Fn(&[ParticipantId]) -> f64 + Sync,
{
    pub fn new(range: f64, f: F) -> Self {
        SetGame { f, range }
    }
}

impl<F> UtilityOracle for SetGame<F>
where
    F: Fn(&[ParticipantId]) -> f64 + Sync,
{
    fn utility(&self, _history: &[Coalition], block: &Coalition) -> Result<f64> {
        Ok((self.f)(block.ids()))
    }

    fn range_bound(&self) -> f64 {
        self.range
    }
}

/// A multi-round game defined by one utility table per round.
///
/// `tables[t][mask]` is the utility of the realized history followed by the
/// subset of `rounds[t]` selected by `mask`. Consecutive tables are chained:
/// the empty subset of round `t` equals the full set of round `t − 1`.
#[derive(Debug, Clone)]
pub struct RoundTableOracle {
    rounds: Vec<Coalition>,
    tables: Vec<Vec<f64>>,
    initial: f64,
    range: f64,
}

impl RoundTableOracle {
    pub fn new(rounds: Vec<Coalition>, tables: Vec<Vec<f64>>, range: f64) -> Result<Self> {
        if rounds.is_empty() || rounds.len() != tables.len() {
            return Err(Error::param("need one table per round"));
        }
        for (t, (r, tab)) in rounds.iter().zip(&tables).enumerate() {
            if r.len() > 20 || tab.len() != 1 << r.len() {
                return Err(Error::param(format!("round {t}: table size does not match 2^{}", r.len())));
            }
            if t > 0 && tab[0] != *tables[t - 1].last().unwrap() {
                return Err(Error::param(format!("round {t}: empty-subset utility breaks the chain")));
            }
            if tab.iter().any(|&u| !(0.0..=range).contains(&u)) {
                return Err(Error::param(format!("round {t}: utility outside [0, {range}]")));
            }
        }
        Ok(RoundTableOracle { initial: tables[0][0], rounds, tables, range })
    }

    /// Uniform random utilities in `[0, range]`, chained across rounds.
    pub fn random(rounds: Vec<Coalition>, range: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut tables: Vec<Vec<f64>> = Vec::with_capacity(rounds.len());
        for r in &rounds {
            let mut tab: Vec<f64> = (0..1usize << r.len()).map(|_| rng.random::<f64>() * range).collect();
            if let Some(prev) = tables.last() {
                tab[0] = *prev.last().unwrap();
            }
            tables.push(tab);
        }
        RoundTableOracle::new(rounds, tables, range).expect("random tables are consistent")
    }

    /// Builds tables from `f(t, subset)`; `f(t, ∅)` is overridden by the chain rule for `t > 0`.
    pub fn from_fn(rounds: Vec<Coalition>, range: f64, f: impl Fn(usize, &[ParticipantId]) -> f64) -> Result<Self> {
        let mut tables: Vec<Vec<f64>> = Vec::with_capacity(rounds.len());
        for (t, r) in rounds.iter().enumerate() {
            let mut tab: Vec<f64> =
                (0..1u64 << r.len()).map(|mask| f(t, Coalition::from_mask(r.ids(), mask).ids())).collect();
            if let Some(prev) = tables.last() {
                tab[0] = *prev.last().unwrap();
            }
            tables.push(tab);
        }
        RoundTableOracle::new(rounds, tables, range)
    }

    /// Pointwise sum of two oracles over the same rounds.
    pub fn sum(&self, other: &RoundTableOracle) -> Result<Self> {
        if self.rounds != other.rounds {
            return Err(Error::param("oracles cover different rounds"));
        }
        let tables =
            self.tables.iter().zip(&other.tables).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        RoundTableOracle::new(self.rounds.clone(), tables, self.range + other.range)
    }

    pub fn rounds(&self) -> &[Coalition] {
        &self.rounds
    }

    pub fn table(&self, round: usize) -> &[f64] {
        &self.tables[round]
    }

    pub fn initial_utility(&self) -> f64 {
        self.initial
    }

    pub fn final_utility(&self) -> f64 {
        *self.tables.last().unwrap().last().unwrap()
    }

    fn mask_of(&self, round: usize, block: &Coalition) -> Result<usize> {
        let players = self.rounds[round].ids();
        let mut mask = 0usize;
        for &id in block.ids() {
            let pos = players
                .binary_search(&id)
                .map_err(|_| Error::Oracle(format!("participant {id} was not selected in round {round}")))?;
            mask |= 1 << pos;
        }
        Ok(mask)
    }
}

impl UtilityOracle for RoundTableOracle {
    fn utility(&self, history: &[Coalition], block: &Coalition) -> Result<f64> {
        let t = history.len();
        if t > self.rounds.len() || history.iter().zip(&self.rounds).any(|(h, r)| h != r) {
            return Err(Error::Oracle("history does not match the realized rounds".into()));
        }
        if t == self.rounds.len() {
            return if block.is_empty() {
                Ok(self.final_utility())
            } else {
                Err(Error::Oracle("no round recorded after the full history".into()))
            };
        }
        Ok(self.tables[t][self.mask_of(t, block)?])
    }

    fn range_bound(&self) -> f64 {
        self.range
    }
}
