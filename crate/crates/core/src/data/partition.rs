use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    Iid,
    Shards,
}

/// Assignment of sample indices to participants `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub participant_count: usize,
    pub shards_per_participant: Option<usize>,
    pub assignment: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn shard(&self, participant: usize) -> &[usize] {
        &self.assignment[participant]
    }

    /// True when the assignment is a disjoint cover of `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.assignment.iter().flatten() {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Shuffles all indices and cuts them into `participants` contiguous chunks
/// whose sizes differ by at most one.
pub fn partition_iid(ds: &Dataset, participants: usize, seed: u64) -> Result<PartitionPlan> {
    let n = ds.len();
    if participants == 0 || participants > n {
        return Err(Error::Partition(format!("cannot split {n} samples among {participants} participants")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let (base, extra) = (n / participants, n % participants);
    let mut assignment = Vec::with_capacity(participants);
    let mut start = 0;
    for p in 0..participants {
        let len = base + usize::from(p < extra);
        assignment.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(PartitionPlan {
        mode: PartitionMode::Iid,
        participant_count: participants,
        shards_per_participant: None,
        assignment,
    })
}

/// Sorts samples by label, cuts `shard_count` equal shards and deals
/// `shards_per_participant` random shards to every participant.
pub fn partition_noniid_shards(
    ds: &Dataset,
    participants: usize,
    shard_count: usize,
    shards_per_participant: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    let n = ds.len();
    if participants == 0 || shards_per_participant == 0 || shard_count != participants * shards_per_participant {
        return Err(Error::Partition(format!(
            "shard count {shard_count} must equal participants {participants} × shards per participant {shards_per_participant}"
        )));
    }
    if !n.is_multiple_of(shard_count) {
        return Err(Error::Partition(format!("{shard_count} shards do not divide {n} samples")));
    }
    let shard_len = n / shard_count;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (ds.label(i), i));
    let mut shards: Vec<usize> = (0..shard_count).collect();
    shards.shuffle(&mut seed::rng(seed));
    let assignment = shards
        .chunks(shards_per_participant)
        .map(|own| own.iter().flat_map(|&s| idx[s * shard_len..(s + 1) * shard_len].iter().copied()).collect())
        .collect();
    Ok(PartitionPlan {
        mode: PartitionMode::Shards,
        participant_count: participants,
        shards_per_participant: Some(shards_per_participant),
        assignment,
    })
}
