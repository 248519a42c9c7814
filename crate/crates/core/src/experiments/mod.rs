//! Evaluation protocols: noisy and backdoor participant detection, data
//! summarization and per-round contribution norms.

mod detection;
mod summarization;
mod tables;

use std::path::Path;

use crate::config::{CorruptionConfig, CorruptionKind, DatasetSpec, ExperimentConfig};
use crate::data::{
    flip_labels, implant_backdoor, load_delimited, load_idx, partition_iid, partition_noniid_shards, synth_blobs,
    BackdoorSpec, CorruptionSpec, Dataset, PartitionMode, PartitionPlan,
};
use crate::error::{Error, Result};
use crate::seed;

pub use detection::{
    detection_curve, random_detection_curve, run_backdoor_detection, run_detection, run_noisy_detection,
    DetectionCurve, DetectionOutcome, MethodCurve,
};
pub use summarization::{round_contribution_norms, run_summarization, SummarizationResult};
pub use tables::{write_detection_tables, write_norms_table, write_summarization_table};

/// Data, partition and corruption of one experiment, built from the config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub plan: PartitionPlan,
    pub corruption: Option<CorruptionSpec>,
}

impl Prepared {
    /// Ids of the corrupted participants (empty without corruption).
    pub fn bad(&self) -> &[u32] {
        self.corruption.as_ref().map_or(&[], |c| c.affected())
    }
}

pub fn load_splits(spec: &DatasetSpec, master_seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    match spec {
        DatasetSpec::Blobs { train, validation, test, features, classes, separation } => {
            let all = synth_blobs(
                train + validation + test,
                *features,
                *classes,
                *separation,
                seed::stream(master_seed, seed::DATA),
            )?;
            Ok((
                all.slice(0, *train)?,
                all.slice(*train, train + validation)?,
                all.slice(train + validation, all.len())?,
            ))
        }
        DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, train_limit, validation } => {
            let mut train = load_idx(train_images, train_labels)?;
            if let Some(limit) = train_limit {
                train = train.slice(0, (*limit).min(train.len()))?;
            }
            let held = load_idx(test_images, test_labels)?;
            if held.len() <= *validation {
                return Err(Error::Dataset(format!(
                    "test files hold {} samples, need more than {validation} for validation",
                    held.len()
                )));
            }
            Ok((train, held.slice(0, *validation)?, held.slice(*validation, held.len())?))
        }
        DatasetSpec::Delimited { path, delimiter, header, validation, test } => {
            let byte = u8::try_from(*delimiter).map_err(|_| Error::param("delimiter must be a single byte"))?;
            let all = load_delimited(path, byte, *header)?;
            let held = validation + test;
            if all.len() <= held {
                return Err(Error::Dataset(format!("{} has too few rows for the held-out splits", path.display())));
            }
            let cut = all.len() - held;
            Ok((all.slice(0, cut)?, all.slice(cut, cut + validation)?, all.slice(cut + validation, all.len())?))
        }
    }
}

fn affected_ids(c: &CorruptionConfig, participants: usize, master_seed: u64) -> Vec<u32> {
    if let Some(ids) = &c.affected {
        let mut ids = ids.clone();
        ids.sort_unstable();
        ids.dedup();
        return ids;
    }
    let count = c
        .affected_count
        .unwrap_or_else(|| (c.affected_fraction.unwrap_or(0.0) * participants as f64).round() as usize)
        .min(participants);
    let mut rng = seed::rng(seed::stream(master_seed, seed::CORRUPTION));
    let mut ids: Vec<u32> =
        rand::seq::index::sample(&mut rng, participants, count).into_iter().map(|i| i as u32).collect();
    ids.sort_unstable();
    ids
}

pub fn corruption_spec(c: &CorruptionConfig, participants: usize, master_seed: u64) -> Result<CorruptionSpec> {
    let affected = affected_ids(c, participants, master_seed);
    Ok(match c.kind {
        CorruptionKind::LabelFlip => CorruptionSpec::LabelFlip {
            affected,
            flip_ratio: c.flip_ratio.ok_or_else(|| Error::param("label flipping needs flip_ratio"))?,
        },
        CorruptionKind::Backdoor => CorruptionSpec::Backdoor(BackdoorSpec {
            affected,
            trigger: c.trigger.clone().ok_or_else(|| Error::param("backdoor needs a trigger"))?,
            target_label: c.target_label.ok_or_else(|| Error::param("backdoor needs target_label"))?,
            quota: c.quota,
            batch_size: c.batch_size,
        }),
    })
}

/// Loads the data, partitions it and applies the configured corruption.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (train, validation, test) = load_splits(&cfg.dataset, cfg.seed)?;
    let n = cfg.partition.participants;
    let part_seed = seed::stream(cfg.seed, seed::PARTITION);
    let plan = match cfg.partition.mode {
        PartitionMode::Iid => partition_iid(&train, n, part_seed)?,
        PartitionMode::Shards => {
            let spp = cfg.partition.shards_per_participant;
            partition_noniid_shards(&train, n, n * spp, spp, part_seed)?
        }
    };
    let (train, corruption) = match &cfg.corruption {
        None => (train, None),
        Some(c) => {
            let spec = corruption_spec(c, n, cfg.seed)?;
            let apply_seed = seed::child(seed::stream(cfg.seed, seed::CORRUPTION), 1);
            let corrupted = match spec {
                CorruptionSpec::LabelFlip { .. } => flip_labels(&train, &plan, &spec, apply_seed)?,
                CorruptionSpec::Backdoor(_) => implant_backdoor(&train, &plan, &spec, apply_seed)?,
            };
            (corrupted, Some(spec))
        }
    };
    Ok(Prepared { train, validation, test, plan, corruption })
}

/// Creates `dir` if needed; refuses a path that exists as a file.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.is_file() {
        return Err(Error::param(format!("{} is a file, not a directory", dir.display())));
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}
