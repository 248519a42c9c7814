//! Participants, coalitions, utility oracles and value vectors, plus the
//! exact federated Shapley value and federated leave-one-out.

mod exact;
mod loo;
mod report;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{
    exact_federated_round_shapley, exact_federated_round_shapley_with_cap, exact_shapley,
    exact_shapley_permutation_form, exact_shapley_with_cap, PERMUTATION_CAP, SUBSET_CAP,
};
pub use loo::federated_loo_round;
pub use report::{aggregate_rounds, normalize_round_values, read_report, write_report, ValuationReport};
pub use synthetic::{RoundTableOracle, SetGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub u32);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for ParticipantId {
    fn from(v: u32) -> Self {
        ParticipantId(v)
    }
}

/// A set of participants used in one round, stored sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParticipantId>", into = "Vec<ParticipantId>")]
pub struct Coalition(Vec<ParticipantId>);

impl Coalition {
    pub fn empty() -> Self {
        Coalition(Vec::new())
    }

    /// Builds a coalition, rejecting duplicate ids.
    pub fn new(ids: impl IntoIterator<Item = ParticipantId>) -> Result<Self> {
        let mut v: Vec<ParticipantId> = ids.into_iter().collect();
        v.sort_unstable();
        if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Coalition(format!("participant {} appears twice", w[0])));
        }
        Ok(Coalition(v))
    }

    pub fn from_ids(ids: &[u32]) -> Result<Self> {
        Self::new(ids.iter().map(|&i| ParticipantId(i)))
    }

    /// Members of `players` selected by the bits of `mask`.
    pub(crate) fn from_mask(players: &[ParticipantId], mask: u64) -> Self {
        Coalition(players.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p).collect())
    }

    /// Members of `players` at the given positions.
    pub(crate) fn from_positions(players: &[ParticipantId], positions: &[usize]) -> Self {
        let mut v: Vec<ParticipantId> = positions.iter().map(|&i| players[i]).collect();
        v.sort_unstable();
        Coalition(v)
    }

    pub fn ids(&self) -> &[ParticipantId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: ParticipantId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn is_subset_of(&self, other: &Coalition) -> bool {
        self.0.iter().all(|&id| other.contains(id))
    }

    pub fn without(&self, id: ParticipantId) -> Coalition {
        Coalition(self.0.iter().copied().filter(|&x| x != id).collect())
    }
}

impl TryFrom<Vec<ParticipantId>> for Coalition {
    type Error = Error;

    fn try_from(v: Vec<ParticipantId>) -> Result<Self> {
        Coalition::new(v)
    }
}

impl From<Coalition> for Vec<ParticipantId> {
    fn from(c: Coalition) -> Self {
        c.0
    }
}

/// Ordered blocks of participants; block `t` is the coalition used in round `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionSequence {
    pub blocks: Vec<Coalition>,
}

impl CoalitionSequence {
    pub fn new(blocks: Vec<Coalition>) -> Self {
        CoalitionSequence { blocks }
    }

    pub fn push(&mut self, block: Coalition) {
        self.blocks.push(block);
    }

    pub fn as_slice(&self) -> &[Coalition] {
        &self.blocks
    }
}

/// Utility of the model produced by an ordered sequence of coalition blocks.
///
/// Implementations must be deterministic and return values in
/// `[0, range_bound()]`. Appending an empty block must not change the
/// utility: `utility(h, ∅)` equals the utility of `h` itself.
pub trait UtilityOracle: Sync {
    /// Utility of `history` followed by `block`.
    fn utility(&self, history: &[Coalition], block: &Coalition) -> Result<f64>;

    fn range_bound(&self) -> f64;

    fn evaluate(&self, sequence: &CoalitionSequence) -> Result<f64> {
        match sequence.blocks.split_last() {
            None => self.utility(&[], &Coalition::empty()),
            Some((last, prefix)) => self.utility(prefix, last),
        }
    }
}

impl<T: UtilityOracle + ?Sized> UtilityOracle for &T {
    fn utility(&self, history: &[Coalition], block: &Coalition) -> Result<f64> {
        (**self).utility(history, block)
    }

    fn range_bound(&self) -> f64 {
        (**self).range_bound()
    }
}

/// Per-participant values for one round, or aggregated over rounds when
/// `round` is `None`. Missing participants have value 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueVector {
    pub round: Option<usize>,
    values: BTreeMap<ParticipantId, f64>,
}

impl ValueVector {
    pub fn new(round: Option<usize>) -> Self {
        ValueVector { round, values: BTreeMap::new() }
    }

    pub fn from_pairs(round: Option<usize>, pairs: impl IntoIterator<Item = (ParticipantId, f64)>) -> Self {
        ValueVector { round, values: pairs.into_iter().collect() }
    }

    pub fn get(&self, id: ParticipantId) -> f64 {
        self.values.get(&id).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, id: ParticipantId, value: f64) {
        self.values.insert(id, value);
    }

    pub fn add(&mut self, id: ParticipantId, value: f64) {
        *self.values.entry(id).or_insert(0.0) += value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParticipantId, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParticipantId> + '_ {
        self.values.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of values in ascending id order.
    pub fn sum(&self) -> f64 {
        self.values.values().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Ensures every id in `universe` has an entry (0 if absent).
    pub fn cover(&mut self, universe: impl IntoIterator<Item = ParticipantId>) {
        for id in universe {
            self.values.entry(id).or_insert(0.0);
        }
    }
}
