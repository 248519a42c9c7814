use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::Result;
use crate::valuation::{Coalition, UtilityOracle};

/// Memoizes utilities of an expensive deterministic oracle.
pub struct CachedOracle<O> {
    inner: O,
    cache: Mutex<HashMap<(Vec<Coalition>, Coalition), f64>>,
}

impl<O: UtilityOracle> CachedOracle<O> {
    pub fn new(inner: O) -> Self {
        CachedOracle { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: UtilityOracle> UtilityOracle for CachedOracle<O> {
    fn utility(&self, history: &[Coalition], block: &Coalition) -> Result<f64> {
        let key = (history.to_vec(), block.clone());
        if let Some(&u) = self.cache.lock().unwrap().get(&key) {
            return Ok(u);
        }
        // Evaluated outside the lock; racing threads compute the same value.
        let u = self.inner.utility(history, block)?;
        self.cache.lock().unwrap().insert(key, u);
        Ok(u)
    }

    fn range_bound(&self) -> f64 {
        self.inner.range_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::{ParticipantId, SetGame};
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn repeated_queries_hit_the_cache() {
        let calls = AtomicUsize::new(0);
        let g = SetGame::new(1.0, |s: &[ParticipantId]| {
            calls.fetch_add(1, Ordering::Relaxed);
            s.len() as f64 / 4.0
        });
        let c = CachedOracle::new(g);
        let s = Coalition::from_ids(&[1, 2]).unwrap();
        assert_eq!(c.utility(&[], &s).unwrap(), 0.5);
        assert_eq!(c.utility(&[], &s).unwrap(), 0.5);
        assert_eq!(calls.load(Ordering::Relaxed), 1);
        assert_eq!(c.len(), 1);
    }
}
