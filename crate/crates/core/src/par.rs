//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in index order so that callers can reduce
//! sequentially and obtain bit-identical output in both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of items per rayon task.
pub const MIN_PAR_LEN: usize = 16;

macro_rules! if_parallel {
    ($par:expr, $seq:expr) => {{
        #[cfg(feature = "parallel")]
        {
            $par
        }
        #[cfg(not(feature = "parallel"))]
        {
            $seq
        }
    }};
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if_parallel!((0..n).into_par_iter().with_min_len(MIN_PAR_LEN).map(f).collect(), (0..n).map(f).collect())
}

/// Like [`map_range`] for fallible tasks. On failure returns the error of the
/// lowest failing index together with that index.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, (usize, E)>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let results: Vec<Result<T, E>> = map_range(n, f);
    let mut out = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => return Err((i, e)),
        }
    }
    Ok(out)
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    if_parallel!(items.par_iter().map(f).collect(), items.iter().map(f).collect())
}

/// Whether this build runs the helpers on rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn try_map_reports_lowest_failure() {
        let r: Result<Vec<usize>, (usize, &str)> =
            try_map_range(200, |i| if i % 50 == 49 { Err("boom") } else { Ok(i) });
        assert_eq!(r.unwrap_err().0, 49);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        let s: CompensatedSum = xs.iter().copied().collect();
        assert_eq!(s.value(), 2.0);
    }
}
