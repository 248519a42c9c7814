use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::seed;

/// Feature positions overwritten with `value` to form the trigger pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackdoorSpec {
    pub affected: Vec<u32>,
    pub trigger: TriggerSpec,
    pub target_label: usize,
    /// Poisoned samples per batch of `batch_size`.
    #[serde(default = "default_quota")]
    pub quota: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_quota() -> usize {
    20
}

fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorruptionSpec {
    LabelFlip { affected: Vec<u32>, flip_ratio: f64 },
    Backdoor(BackdoorSpec),
}

impl CorruptionSpec {
    pub fn affected(&self) -> &[u32] {
        match self {
            CorruptionSpec::LabelFlip { affected, .. } => affected,
            CorruptionSpec::Backdoor(b) => &b.affected,
        }
    }

    pub fn validate(&self, participants: usize, dim: usize, classes: usize) -> Result<()> {
        if let Some(&p) = self.affected().iter().find(|&&p| p as usize >= participants) {
            return Err(Error::param(format!("affected participant {p} does not exist")));
        }
        match self {
            CorruptionSpec::LabelFlip { flip_ratio, .. } => {
                if !(*flip_ratio > 0.0 && *flip_ratio <= 1.0) {
                    return Err(Error::param(format!("flip ratio must lie in (0, 1], got {flip_ratio}")));
                }
                if classes < 2 {
                    return Err(Error::param("label flipping needs at least two classes"));
                }
            }
            CorruptionSpec::Backdoor(b) => {
                if let Some(&i) = b.trigger.indices.iter().find(|&&i| i >= dim) {
                    return Err(Error::param(format!("trigger index {i} outside {dim} features")));
                }
                if b.target_label >= classes {
                    return Err(Error::param(format!("target label {} outside {classes} classes", b.target_label)));
                }
                if b.batch_size == 0 || b.quota > b.batch_size {
                    return Err(Error::param("backdoor quota must not exceed a non-empty batch"));
                }
            }
        }
        Ok(())
    }
}

/// Reassigns `⌊ratio · |shard|⌋` labels of every affected shard to a
/// uniformly chosen different class.
pub fn flip_labels(ds: &Dataset, plan: &PartitionPlan, spec: &CorruptionSpec, seed: u64) -> Result<Dataset> {
    let CorruptionSpec::LabelFlip { affected, flip_ratio } = spec else {
        return Err(Error::param("flip_labels needs a label-flip spec"));
    };
    spec.validate(plan.participant_count, ds.dim(), ds.class_count())?;
    let classes = ds.class_count();
    let mut out = ds.clone();
    for &p in affected {
        let shard = plan.shard(p as usize);
        let count = ((flip_ratio * shard.len() as f64) + 1e-9).floor() as usize;
        let mut rng = seed::task_rng(seed, u64::from(p));
        for pos in rand::seq::index::sample(&mut rng, shard.len(), count.min(shard.len())) {
            let i = shard[pos];
            let old = out.label(i);
            out.set_label(i, (old + 1 + rng.random_range(0..classes - 1)) % classes);
        }
    }
    Ok(out)
}

fn stamp(row: &mut [f64], trigger: &TriggerSpec) {
    for &i in &trigger.indices {
        row[i] = trigger.value;
    }
}

/// Poisons `quota` of every `batch_size` samples (pro rata for the last
/// partial batch) of each affected shard: the trigger is stamped and the
/// label set to the target.
pub fn implant_backdoor(ds: &Dataset, plan: &PartitionPlan, spec: &CorruptionSpec, seed: u64) -> Result<Dataset> {
    let CorruptionSpec::Backdoor(b) = spec else {
        return Err(Error::param("implant_backdoor needs a backdoor spec"));
    };
    spec.validate(plan.participant_count, ds.dim(), ds.class_count())?;
    let mut out = ds.clone();
    for &p in &b.affected {
        let mut shard = plan.shard(p as usize).to_vec();
        rand::seq::SliceRandom::shuffle(shard.as_mut_slice(), &mut seed::task_rng(seed, u64::from(p)));
        for batch in shard.chunks(b.batch_size) {
            let quota = b.quota * batch.len() / b.batch_size;
            for &i in &batch[..quota] {
                stamp(out.row_mut(i), &b.trigger);
                out.set_label(i, b.target_label);
            }
        }
    }
    Ok(out)
}

/// Trigger-stamped copies of the test samples not already of the target
/// class, all labeled with the target class.
pub fn triggered_test_set(test: &Dataset, spec: &CorruptionSpec) -> Result<Dataset> {
    let CorruptionSpec::Backdoor(b) = spec else {
        return Err(Error::param("triggered test set needs a backdoor spec"));
    };
    let keep: Vec<usize> = (0..test.len()).filter(|&i| test.label(i) != b.target_label).collect();
    let mut out = test.subset(&keep)?;
    for i in 0..out.len() {
        stamp(out.row_mut(i), &b.trigger);
        out.set_label(i, b.target_label);
    }
    Ok(out)
}
