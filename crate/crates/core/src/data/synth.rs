use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Isotropic Gaussian clusters, one per class.
///
/// Class centers are random directions scaled to norm `separation`; labels
/// are assigned round-robin so class counts differ by at most one.
pub fn synth_blobs(n: usize, d: usize, class_count: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if class_count < 2 || d == 0 || n < class_count {
        return Err(Error::Dataset(format!(
            "blobs need n >= classes >= 2 and d >= 1 (n={n}, d={d}, classes={class_count})"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::Dataset(format!("invalid separation {separation}")));
    }
    let mut rng = seed::rng(seed);
    let centers: Vec<Vec<f64>> = (0..class_count)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm * separation).collect()
        })
        .collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % class_count;
        labels.push(c);
        for &mu in &centers[c] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push(mu + noise);
        }
    }
    Dataset::new(features, d, labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = synth_blobs(103, 4, 5, 3.0, 1).unwrap();
        let b = synth_blobs(103, 4, 5, 3.0, 1).unwrap();
        assert_eq!(a, b);
        let h = a.class_histogram(&(0..a.len()).collect::<Vec<_>>());
        let (lo, hi) = (h.iter().min().unwrap(), h.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert_ne!(a, synth_blobs(103, 4, 5, 3.0, 2).unwrap());
    }

    #[test]
    fn invalid_dims() {
        assert!(synth_blobs(3, 2, 5, 1.0, 0).is_err());
        assert!(synth_blobs(10, 0, 2, 1.0, 0).is_err());
        assert!(synth_blobs(10, 2, 2, f64::NAN, 0).is_err());
    }
}
