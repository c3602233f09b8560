//! Dataset splitting, the end-to-end training pipeline, experiment grids,
//! attribution and projection, and latency benchmarks.

pub mod artifact;
pub mod explain;
pub mod grid;
pub mod latency;
pub mod pipeline;
pub mod split;

pub use artifact::{write_json, write_results, Artifact, CsvRecord, HeadArtifact, Provenance, UnsupervisedModel};
pub use explain::{pca2, shapley3, Attribution, Pca2};
pub use grid::{attack_grid, baselines, cross_dataset, cross_variants, explain, window_grid, WINDOW_GRID};
pub use latency::{bench_latency, LatencyRow};
pub use pipeline::{run_pipeline, windows_of, PipelineRun, Scenario, SessionSpec};
pub use split::{SplitIndices, SplitSpec};

use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::detectors::DetectorError;
use crate::features::FeatureError;
use crate::metrics::MetricsError;
use crate::simcore::SimError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset too small: {0} samples")]
    TooSmall(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error(transparent)]
    Qoe(#[from] crate::qoe::QoeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
