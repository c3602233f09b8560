//! Supervised heads over the fused anomaly triplet: a one-hidden-layer MLP
//! and small gradient-boosted trees, each optionally followed by Platt
//! calibration.

pub mod calibrate;
pub mod gbt;
pub mod mlp;

pub use calibrate::Calibrator;
pub use gbt::{GbtConfig, GbtModel};
pub use mlp::{MlpConfig, MlpHead};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Label;
use crate::metrics::classify;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("head requires calibration but none was fitted")]
    UncalibratedWhenRequired,
    #[error("calibration slope {0} is not positive")]
    NonMonotoneCalibration(f64),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

pub const TRIPLET_DIM: usize = 3;

/// Inverse-frequency sample weights `n / (2 n_class)`.
pub fn class_weights(labels: &[Label]) -> Vec<f64> {
    let n = labels.len() as f64;
    let fake = labels.iter().filter(|l| l.is_fake()).count() as f64;
    let real = n - fake;
    labels
        .iter()
        .map(|l| {
            let count = if l.is_fake() { fake } else { real };
            n / (2.0 * count)
        })
        .collect()
}

fn check_lengths(x: &[[f64; TRIPLET_DIM]], y: &[Label], needed: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch { features: x.len(), labels: y.len() });
    }
    if x.len() < needed {
        return Err(ClassifierError::InsufficientData { needed, got: x.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Mlp,
    Gbt,
}

impl std::str::FromStr for HeadKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(HeadKind::Mlp),
            "gbt" => Ok(HeadKind::Gbt),
            other => Err(format!("unknown head {other:?} (expected mlp or gbt)")),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::Mlp => "mlp",
            HeadKind::Gbt => "gbt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeadModel {
    Mlp(MlpHead),
    Gbt(GbtModel),
}

impl HeadModel {
    pub fn kind(&self) -> HeadKind {
        match self {
            HeadModel::Mlp(_) => HeadKind::Mlp,
            HeadModel::Gbt(_) => HeadKind::Gbt,
        }
    }

    /// Uncalibrated log-odds.
    pub fn raw_score(&self, x: &[f64; TRIPLET_DIM]) -> f64 {
        match self {
            HeadModel::Mlp(m) => m.logit(x),
            HeadModel::Gbt(m) => m.margin(x),
        }
    }
}

/// A head plus its optional calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub head: HeadModel,
    pub calibrator: Option<Calibrator>,
    pub require_calibration: bool,
}

impl Classifier {
    /// Trains a head on `(x, y)`. GBT early-stops on `(val_x, val_y)`; when
    /// `calibrate` is set, a Platt map is fitted on the validation split.
    pub fn train(
        kind: HeadKind,
        x: &[[f64; TRIPLET_DIM]],
        y: &[Label],
        val_x: &[[f64; TRIPLET_DIM]],
        val_y: &[Label],
        calibrate: bool,
        seed: u64,
    ) -> Result<Self> {
        let head = match kind {
            HeadKind::Mlp => HeadModel::Mlp(MlpHead::train(x, y, &MlpConfig { seed, ..Default::default() })?),
            HeadKind::Gbt => HeadModel::Gbt(GbtModel::train(x, y, val_x, val_y, &GbtConfig::default())?),
        };
        let calibrator = if calibrate {
            let raw: Vec<f64> = val_x.iter().map(|t| head.raw_score(t)).collect();
            Some(Calibrator::fit(&raw, val_y, calibrate::DEFAULT_FOLDS)?)
        } else {
            None
        };
        Ok(Self { head, calibrator, require_calibration: calibrate })
    }

    pub fn predict_proba(&self, x: &[f64; TRIPLET_DIM]) -> Result<f64> {
        let raw = self.head.raw_score(x);
        match (&self.calibrator, self.require_calibration) {
            (Some(c), _) => Ok(c.apply(raw)),
            (None, true) => Err(ClassifierError::UncalibratedWhenRequired),
            (None, false) => Ok(crate::nn::layers::sigmoid(raw)),
        }
    }

    pub fn classify(&self, x: &[f64; TRIPLET_DIM], threshold: f64) -> Result<Label> {
        Ok(classify(self.predict_proba(x)?, threshold))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weights_balance_totals() {
        let y = [Label::Real, Label::Real, Label::Real, Label::Fake];
        let w = class_weights(&y);
        assert!((w[0] * 3.0 - w[3]).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn missing_calibration_is_reported() {
        let x: Vec<[f64; 3]> = (0..40).map(|i| [i as f64, 0.0, 0.0]).collect();
        let y: Vec<Label> = (0..40).map(|i| Label::from_fake(i >= 20)).collect();
        let mut c = Classifier::train(HeadKind::Gbt, &x, &y, &x, &y, true, 0).unwrap();
        assert!(c.predict_proba(&x[0]).is_ok());
        c.calibrator = None;
        assert!(matches!(c.predict_proba(&x[0]), Err(ClassifierError::UncalibratedWhenRequired)));
        assert_eq!("GBT".parse::<HeadKind>().unwrap(), HeadKind::Gbt);
    }
}
