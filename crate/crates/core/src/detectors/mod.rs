//! Unsupervised window scoring: a transformer autoencoder over per-epoch
//! sequences, a dense autoencoder over the distributional features, a
//! Mahalanobis distance on the transformer latent, plus percentile
//! thresholding and classic baselines.

pub mod baselines;
pub mod fusion;
pub mod mahalanobis;
pub mod stat_ae;
pub mod threshold;
pub mod transformer_ae;

pub use fusion::{AnomalyTriplet, FusionNorm};
pub use mahalanobis::MahalanobisFit;
pub use stat_ae::{StatAe, StatAeConfig};
pub use threshold::{percentile_threshold, threshold_detect, threshold_report};
pub use transformer_ae::{TransformerAe, TransformerAeConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Label, WindowSample};
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("covariance is not positive definite")]
    SingularCovariance,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed scores file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T> = std::result::Result<T, DetectorError>;

/// Spreads below this are treated as zero variance.
pub const MIN_SPREAD: f64 = 1e-12;

/// Per-column z-scoring. Zero-variance columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column of `rows`.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(DetectorError::InsufficientData { needed: 1, got: 0 })?;
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(DetectorError::DimensionMismatch { expected: d, got: r.len() });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_one(&self, j: usize, v: f64) -> f64 {
        if self.std[j] < MIN_SPREAD {
            0.0
        } else {
            (v - self.mean[j]) / self.std[j]
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &v)| self.apply_one(j, v)).collect()
    }
}

/// Raw detector outputs for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub session: usize,
    pub switch_id: usize,
    pub start_epoch: u64,
    pub recon: f64,
    pub stat: f64,
    pub mahal: f64,
    pub label: Label,
}

impl ScoreRow {
    pub fn triplet(&self) -> [f64; 3] {
        [self.recon, self.stat, self.mahal]
    }
}

pub const SCORES_HEADER: &str = "switch_id,start_epoch,recon,stat,mahal,label";

pub fn scores_to_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:?},{:?},{:?},{}\n",
            r.switch_id, r.start_epoch, r.recon, r.stat, r.mahal, r.label
        ));
    }
    out
}

/// Parses a scores CSV. Every row gets `session`.
pub fn scores_from_csv(csv: &str, session: usize) -> Result<Vec<ScoreRow>> {
    let mut lines = csv.lines();
    match lines.next() {
        Some(h) if h.trim() == SCORES_HEADER => {}
        other => return Err(DetectorError::Malformed(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| DetectorError::Malformed(format!("line {}: {what}", i + 2));
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        rows.push(ScoreRow {
            session,
            switch_id: cells[0].parse().map_err(|_| bad("bad switch_id"))?,
            start_epoch: cells[1].parse().map_err(|_| bad("bad start_epoch"))?,
            recon: float(cells[2])?,
            stat: float(cells[3])?,
            mahal: float(cells[4])?,
            label: cells[5].parse().map_err(|_| bad("bad label"))?,
        });
    }
    Ok(rows)
}

/// The three trained unsupervised scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedBundle {
    pub transformer: TransformerAe,
    pub stat: StatAe,
    pub mahal: MahalanobisFit,
}

impl UnsupervisedBundle {
    /// Trains all three scorers on the REAL windows of `train`.
    pub fn train(train: &[WindowSample], tae: &TransformerAeConfig, sae: &StatAeConfig) -> Result<Self> {
        let transformer = TransformerAe::train(train, tae)?;
        let stat = StatAe::train(train, sae)?;
        let latents: Vec<Vec<f64>> = train
            .iter()
            .filter(|w| w.label == Label::Real)
            .map(|w| transformer.latent(&w.sequence))
            .collect();
        let mahal = MahalanobisFit::fit(&latents, mahalanobis::DEFAULT_SHRINKAGE)?;
        Ok(Self { transformer, stat, mahal })
    }

    pub fn score(&self, w: &WindowSample) -> ScoreRow {
        let (recon, latent) = self.transformer.recon_and_latent(&w.sequence);
        ScoreRow {
            session: w.session,
            switch_id: w.switch_id,
            start_epoch: w.start_epoch,
            recon,
            stat: self.stat.score(w.features.stat_part()),
            mahal: self.mahal.distance(&latent),
            label: w.label,
        }
    }

    pub fn score_all(&self, windows: &[WindowSample]) -> Vec<ScoreRow> {
        windows.iter().map(|w| self.score(w)).collect()
    }
}
