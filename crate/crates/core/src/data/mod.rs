//! Datasets, loaders, participant partitions and corruption injection.

mod corruption;
mod idx;
mod partition;
mod synth;
mod tabular;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corruption::{flip_labels, implant_backdoor, triggered_test_set, BackdoorSpec, CorruptionSpec, TriggerSpec};
pub use idx::{load_idx, read_idx_images, read_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{partition_iid, partition_noniid_shards, PartitionMode, PartitionPlan};
pub use synth::synth_blobs;
pub use tabular::load_delimited;

/// Row-major features with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("dataset has no samples".into()));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Dataset(format!(
                "{} features do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Dataset(format!("label {bad} outside [0, {class_count})")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Dataset { features, dim, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub(crate) fn set_label(&mut self, i: usize, label: usize) {
        self.labels[i] = label;
    }

    /// Copies the listed rows into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Dataset(format!("row {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, self.dim, labels, self.class_count)
    }

    /// Contiguous row range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        self.subset(&(start..end).collect::<Vec<_>>())
    }

    /// Per-class counts.
    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }
}

/// A borrowed selection of rows, e.g. one participant's shard.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub data: &'a Dataset,
    pub indices: &'a [usize],
}

impl<'a> DataView<'a> {
    pub fn new(data: &'a Dataset, indices: &'a [usize]) -> Self {
        DataView { data, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Shannon entropy (nats) of a label histogram.
pub fn label_entropy(histogram: &[usize]) -> f64 {
    let n: usize = histogram.iter().sum();
    if n == 0 {
        return 0.0;
    }
    histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_checks() {
        assert!(Dataset::new(vec![], 2, vec![], 2).is_err());
        assert!(Dataset::new(vec![0.0; 3], 2, vec![0, 1], 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, vec![0, 2], 2).is_err());
        assert!(Dataset::new(vec![0.0, f64::NAN], 2, vec![0], 2).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![0, 1], 2).unwrap();
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.subset(&[1]).unwrap().row(0), &[3.0, 4.0]);
    }

    #[test]
    fn entropy() {
        assert_eq!(label_entropy(&[5, 0]), 0.0);
        assert!((label_entropy(&[1, 1]) - 2f64.ln()).abs() < 1e-15);
    }
}
