use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};
use crate::features::Label;
use crate::nn::layers::sigmoid;

pub const DEFAULT_FOLDS: usize = 5;

/// Platt scaling `p = sigmoid(a * s + b)` with `(a, b)` averaged over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub a: f64,
    pub b: f64,
    /// Per-fold parameters before averaging.
    pub folds: Vec<(f64, f64)>,
}

/// Newton fit of `(a, b)` on Platt's smoothed targets.
pub fn fit_platt(scores: &[f64], labels: &[Label]) -> (f64, f64) {
    let pos = labels.iter().filter(|l| l.is_fake()).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|l| if l.is_fake() { hi } else { lo }).collect();
    let (mut a, mut b) = (1.0, ((pos + 1.0) / (neg + 1.0)).ln());
    let nll = |a: f64, b: f64| -> f64 {
        scores.iter().zip(&t).map(|(&s, &t)| super::mlp::bce_with_logit(a * s + b, t)).sum()
    };
    let mut current = nll(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (&s, &t) in scores.iter().zip(&t) {
            let p = sigmoid(a * s + b);
            let d = p - t;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        // Backtrack until the objective does not increase.
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let candidate = nll(na, nb);
            if candidate <= current {
                let done = (current - candidate).abs() < 1e-12 * current.max(1.0);
                (a, b, current) = (na, nb, candidate);
                accepted = !done;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (a, b)
}

impl Calibrator {
    /// Splits the samples into `folds` interleaved folds, fits on the
    /// complement of each, and averages the parameters.
    pub fn fit(scores: &[f64], labels: &[Label], folds: usize) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(ClassifierError::LengthMismatch { features: scores.len(), labels: labels.len() });
        }
        let folds = folds.max(1);
        if scores.len() < 2 * folds {
            return Err(ClassifierError::InsufficientData { needed: 2 * folds, got: scores.len() });
        }
        let mut params = Vec::with_capacity(folds);
        for k in 0..folds {
            let keep = |i: &usize| folds == 1 || i % folds != k;
            let s: Vec<f64> = (0..scores.len()).filter(keep).map(|i| scores[i]).collect();
            let l: Vec<Label> = (0..labels.len()).filter(keep).map(|i| labels[i]).collect();
            params.push(fit_platt(&s, &l));
        }
        let a = params.iter().map(|p| p.0).sum::<f64>() / folds as f64;
        let b = params.iter().map(|p| p.1).sum::<f64>() / folds as f64;
        if a <= 0.0 {
            return Err(ClassifierError::NonMonotoneCalibration(a));
        }
        Ok(Self { a, b, folds: params })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        sigmoid(self.a * raw + self.b)
    }
}
