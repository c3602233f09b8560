use serde::{Deserialize, Serialize};

use super::{DetectorError, Result};
use crate::linalg::{cholesky, cholesky_inverse};
use crate::nn::Tensor2;

/// Ridge added to the sample covariance before inversion.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

/// Mean and shrunk precision matrix of a reference sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisFit {
    pub mean: Vec<f64>,
    pub precision: Tensor2,
    pub shrinkage: f64,
}

impl MahalanobisFit {
    /// Fits from at least `d + 1` rows of dimension `d`, using the unbiased
    /// sample covariance plus `shrinkage * I`.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], shrinkage: f64) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        if d == 0 || rows.len() < d + 1 {
            return Err(DetectorError::InsufficientData { needed: d.max(1) + 1, got: rows.len() });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(DetectorError::DimensionMismatch { expected: d, got: r.len() });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut cov = Tensor2::zeros(d, d);
        for r in rows {
            let c: Vec<f64> = r.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for j in 0..d {
                    *cov.at_mut(i, j) += c[i] * c[j];
                }
            }
        }
        cov.scale_assign(1.0 / (n - 1.0));
        for i in 0..d {
            *cov.at_mut(i, i) += shrinkage;
        }
        let l = cholesky(&cov).ok_or(DetectorError::SingularCovariance)?;
        Ok(Self { mean, precision: cholesky_inverse(&l), shrinkage })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `sqrt((x - mu)^T P (x - mu))`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.squared_distance(x).max(0.0).sqrt()
    }

    pub fn squared_distance(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "query dimension");
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            let row = self.precision.row(i);
            s += c[i] * row.iter().zip(&c).map(|(p, v)| p * v).sum::<f64>();
        }
        s
    }
}
