use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::linalg::symmetric_eigen;
use crate::nn::Tensor2;

/// Exact interventional Shapley values of a three-feature model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub values: [f64; 3],
    /// Mean prediction over the background set.
    pub base: f64,
    pub prediction: f64,
}

/// Enumerates all eight coalitions. A coalition's value is the mean
/// prediction with its features taken from `x` and the others from each
/// background row.
pub fn shapley3(predict: impl Fn(&[f64; 3]) -> f64, x: &[f64; 3], background: &[[f64; 3]]) -> Result<Attribution> {
    if background.is_empty() {
        return Err(EvalError::TooSmall(0));
    }
    let value = |mask: usize| -> f64 {
        background
            .iter()
            .map(|b| predict(&[0, 1, 2].map(|i| if mask & (1 << i) != 0 { x[i] } else { b[i] })))
            .sum::<f64>()
            / background.len() as f64
    };
    let v: Vec<f64> = (0..8).map(value).collect();
    // |S|! (n - |S| - 1)! / n! for n = 3.
    let weight = |size: u32| if size == 1 { 1.0 / 6.0 } else { 1.0 / 3.0 };
    let mut values = [0.0; 3];
    for (i, phi) in values.iter_mut().enumerate() {
        for s in (0..8usize).filter(|s| s & (1 << i) == 0) {
            *phi += weight(s.count_ones()) * (v[s | (1 << i)] - v[s]);
        }
    }
    Ok(Attribution { values, base: v[0], prediction: v[7] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// Share of total variance carried by each component, descending.
    pub explained: [f64; 2],
    pub projection: Vec<[f64; 2]>,
    /// Set when the data spans fewer than two directions; the second
    /// component is then zero.
    pub rank_deficient: bool,
}

/// Projection onto the top two principal axes of the sample covariance.
pub fn pca2<R: AsRef<[f64]>>(rows: &[R]) -> Result<Pca2> {
    let d = rows.first().map_or(0, |r| r.as_ref().len());
    if rows.len() < 3 || d < 2 {
        return Err(EvalError::TooSmall(rows.len()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v / n;
        }
    }
    let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let mut cov = Tensor2::zeros(d, d);
    for c in &centred {
        for i in 0..d {
            for j in 0..d {
                *cov.at_mut(i, j) += c[i] * c[j] / (n - 1.0);
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(&cov);
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let tiny = 1e-12 * total.max(f64::MIN_POSITIVE);
    let rank_deficient = vals[1] <= tiny;
    let column = |k: usize| -> Vec<f64> {
        if k == 1 && rank_deficient {
            vec![0.0; d]
        } else {
            (0..d).map(|r| vecs.at(r, k)).collect()
        }
    };
    let components = [column(0), column(1)];
    let eigenvalues = [vals[0].max(0.0), if rank_deficient { 0.0 } else { vals[1] }];
    let explained = if total > 0.0 { eigenvalues.map(|l| l / total) } else { [0.0; 2] };
    let projection = centred
        .iter()
        .map(|c| [0, 1].map(|k| c.iter().zip(&components[k]).map(|(a, b)| a * b).sum()))
        .collect();
    Ok(Pca2 { mean, components, eigenvalues, explained, projection, rank_deficient })
}
