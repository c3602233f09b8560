use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2, test: 0.2, seed: 0 }
    }
}

/// Index sets of a shuffled train/validation/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidConfig(format!("split fractions {parts:?} must be in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// Shuffles `0..n` with the seed and cuts it by the fractions (rounded
    /// to the nearest count; the test part takes the remainder).
    pub fn split(&self, n: usize) -> Result<SplitIndices> {
        self.validate()?;
        if n < 10 {
            return Err(EvalError::TooSmall(n));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = (self.train * n as f64).round() as usize;
        let n_val = ((self.val * n as f64).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok(SplitIndices { train: idx, val, test })
    }
}

/// Clones the elements of `items` at `idx`.
pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let s = SplitSpec::default();
        let a = s.split(1000).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (600, 200, 200));
        assert_eq!(a, s.split(1000).unwrap());
        let b = s.split(10).unwrap();
        assert_eq!((b.train.len(), b.val.len(), b.test.len()), (6, 2, 2));
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(SplitSpec::default().split(9), Err(EvalError::TooSmall(9))));
        assert!(SplitSpec { train: 0.7, ..Default::default() }.split(100).is_err());
    }
}
