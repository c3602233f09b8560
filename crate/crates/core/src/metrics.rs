//! Binary classification metrics with FAKE as the positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("AUC is undefined when only one class is present")]
    SingleClassAuc,
    #[error("{labels} labels but {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("no samples")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision_fake: f64,
    pub recall_fake: f64,
    pub f1_fake: f64,
    pub precision_real: f64,
    pub recall_real: f64,
    pub f1_real: f64,
    pub accuracy: f64,
    /// Absent when the labels contain a single class.
    pub auc: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl MetricsReport {
    /// Metrics from confusion counts alone (AUC left absent).
    pub fn from_counts(threshold: f64, tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision_fake = ratio(tp, tp + fp);
        let recall_fake = ratio(tp, tp + fn_);
        let precision_real = ratio(tn, tn + fn_);
        let recall_real = ratio(tn, tn + fp);
        Self {
            threshold,
            tp,
            fp,
            fn_,
            tn,
            precision_fake,
            recall_fake,
            f1_fake: f1(precision_fake, recall_fake),
            precision_real,
            recall_real,
            f1_real: f1(precision_real, recall_real),
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            auc: None,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// FAKE iff `score > threshold`; ties go to REAL.
pub fn classify(score: f64, threshold: f64) -> Label {
    Label::from_fake(score > threshold)
}

pub fn compute_metrics(labels: &[Label], scores: &[f64], threshold: f64) -> Result<MetricsReport, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), scores: scores.len() });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&l, &s) in labels.iter().zip(scores) {
        match (l, classify(s, threshold)) {
            (Label::Fake, Label::Fake) => tp += 1,
            (Label::Real, Label::Fake) => fp += 1,
            (Label::Fake, Label::Real) => fn_ += 1,
            (Label::Real, Label::Real) => tn += 1,
        }
    }
    let mut report = MetricsReport::from_counts(threshold, tp, fp, fn_, tn);
    report.auc = roc_auc(labels, scores).ok();
    Ok(report)
}

/// ROC AUC as the Mann-Whitney statistic with average ranks for ties.
pub fn roc_auc(labels: &[Label], scores: &[f64]) -> Result<f64, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), scores: scores.len() });
    }
    let n_pos = labels.iter().filter(|l| l.is_fake()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k].is_fake() {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Linearly interpolated percentile (`p` in `[0, 100]`) of `values`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn perfect_separation() {
        let labels = [Real, Real, Fake, Fake];
        let m = compute_metrics(&labels, &[0.1, 0.2, 0.8, 0.9], 0.5).unwrap();
        assert_eq!((m.f1_fake, m.f1_real, m.accuracy, m.auc), (1.0, 1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn confusion_arithmetic() {
        let m = MetricsReport::from_counts(0.5, 2, 1, 1, 6);
        assert!((m.precision_fake - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall_fake - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1_fake - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        assert_eq!(m.total(), 10);
    }

    #[test]
    fn ties_and_single_class() {
        assert_eq!(roc_auc(&[Real, Fake], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[Real, Real], &[0.1, 0.2]), Err(MetricsError::SingleClassAuc));
        let m = compute_metrics(&[Real, Real], &[0.1, 0.7], 0.5).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(classify(0.5, 0.5), Real);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 90.0), Some(4.6));
        assert_eq!(percentile(&v, 100.0), Some(5.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
