use crate::features::Label;
use crate::metrics::{classify, compute_metrics, percentile, MetricsError, MetricsReport};

/// The `p`-th percentile of REAL validation scores.
pub fn percentile_threshold(real_val_scores: &[f64], p: f64) -> Option<f64> {
    percentile(real_val_scores, p)
}

/// FAKE iff the score exceeds the threshold.
pub fn threshold_detect(scores: &[f64], threshold: f64) -> Vec<Label> {
    scores.iter().map(|&s| classify(s, threshold)).collect()
}

/// Metrics of thresholding `scores` at the `p`-th percentile of
/// `real_val_scores`.
pub fn threshold_report(
    labels: &[Label],
    scores: &[f64],
    real_val_scores: &[f64],
    p: f64,
) -> Result<MetricsReport, MetricsError> {
    let t = percentile_threshold(real_val_scores, p).ok_or(MetricsError::Empty)?;
    compute_metrics(labels, scores, t)
}
