//! Sliding-window feature extraction over per-switch reported loads.
//!
//! Each window yields a fixed 14-dimensional [`FeatureVector`] in four groups
//! (basic load statistics, distributional indicators, temporal stability and
//! peer context), a per-epoch sequence for the sequence autoencoder, and a
//! REAL/FAKE label that is FAKE when any epoch inside it was misreported.

pub mod stats;

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simcore::TelemetryLog;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("log has {len} epochs, shorter than the window length {window}")]
    LogTooShort { len: usize, window: usize },
    #[error("peer features need at least two switches")]
    SinglePeerGroup,
    #[error("invalid window configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed feature file: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

pub const NUM_FEATURES: usize = 14;

/// Column names, in vector order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "last_load",
    "mean_load",
    "last_delta",
    "rolling_mean",
    "percentile_rank_of_last",
    "zscore_of_last",
    "skewness",
    "excess_kurtosis",
    "std_dev",
    "autocorr_lag1",
    "mad",
    "load_ratio",
    "mean_peer_delta",
    "unique_count",
];

/// Indices of the basic load statistics; the remaining ten feed the
/// statistical autoencoder.
pub const BASIC_FEATURES: std::ops::Range<usize> = 0..4;
pub const STAT_FEATURES: std::ops::Range<usize> = 4..NUM_FEATURES;

/// Per-epoch channels fed to the sequence autoencoder: own reported load,
/// own delta, mean peer load, mean peer delta, and the own load's robust
/// z-score within the window (median and scaled MAD, clipped).
pub const SEQ_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The ten non-basic features.
    pub fn stat_part(&self) -> &[f64] {
        &self.0[STAT_FEATURES]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn from_fake(fake: bool) -> Self {
        if fake {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "REAL",
            Label::Fake => "FAKE",
        })
    }
}

impl FromStr for Label {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "REAL" | "0" => Ok(Label::Real),
            "FAKE" | "1" => Ok(Label::Fake),
            other => Err(FeatureError::Malformed(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub stride: usize,
    /// Span of the rolling mean ending at the window's last epoch.
    pub rolling_span: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self::new(10, 5)
    }
}

impl WindowConfig {
    /// Window of `window_len` epochs with `rolling_span = window_len`.
    pub fn new(window_len: usize, stride: usize) -> Self {
        Self { window_len, stride, rolling_span: window_len }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 3 {
            return Err(FeatureError::InvalidConfig("window_len must be at least 3".into()));
        }
        if self.stride == 0 || self.stride > self.window_len {
            return Err(FeatureError::InvalidConfig(format!(
                "stride must lie in [1, {}], got {}",
                self.window_len, self.stride
            )));
        }
        if self.rolling_span == 0 {
            return Err(FeatureError::InvalidConfig("rolling_span must be positive".into()));
        }
        Ok(())
    }

    /// Windows per switch for a log of `len` epochs.
    pub fn count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.stride + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Index of the telemetry session the window came from.
    pub session: usize,
    pub switch_id: usize,
    pub start_epoch: u64,
    pub features: FeatureVector,
    pub label: Label,
    /// `window_len` rows of [`SEQ_CHANNELS`] values.
    pub sequence: Vec<[f64; SEQ_CHANNELS]>,
}

/// Load ratio against the peers' rolling means and the mean of the peers'
/// last deltas.
pub fn peer_features(own: usize, rolling_means: &[f64], last_deltas: &[f64]) -> Result<(f64, f64)> {
    let n = rolling_means.len();
    if n < 2 || last_deltas.len() != n || own >= n {
        return Err(FeatureError::SinglePeerGroup);
    }
    let peers = (n - 1) as f64;
    let peer_mean = rolling_means.iter().enumerate().filter(|&(i, _)| i != own).map(|(_, v)| v).sum::<f64>() / peers;
    let ratio = if peer_mean.abs() < 1e-9 { 1.0 } else { rolling_means[own] / peer_mean };
    let peer_delta = last_deltas.iter().enumerate().filter(|&(i, _)| i != own).map(|(_, v)| v).sum::<f64>() / peers;
    Ok((ratio, peer_delta))
}

/// Per-switch reported series as floats, indexed `[switch][epoch]`.
fn reported_matrix(log: &TelemetryLog) -> Vec<Vec<f64>> {
    (0..log.num_switches())
        .map(|s| log.records.iter().map(|r| r.reported_load[s] as f64).collect())
        .collect()
}

fn delta_at(series: &[f64], t: usize) -> f64 {
    if t == 0 {
        0.0
    } else {
        series[t] - series[t - 1]
    }
}

fn rolling_mean_at(series: &[f64], end: usize, span: usize) -> f64 {
    let from = (end + 1).saturating_sub(span);
    stats::mean(&series[from..=end])
}

/// Features of one window of `series[s]` covering `start..start+w`.
fn window_features(series: &[Vec<f64>], s: usize, start: usize, cfg: &WindowConfig) -> Result<FeatureVector> {
    let w = cfg.window_len;
    let end = start + w - 1;
    let xs = &series[s][start..=end];
    let rolling: Vec<f64> = series.iter().map(|x| rolling_mean_at(x, end, cfg.rolling_span)).collect();
    let deltas: Vec<f64> = series.iter().map(|x| delta_at(x, end)).collect();
    let (load_ratio, mean_peer_delta) = peer_features(s, &rolling, &deltas)?;
    let unique = xs.iter().map(|x| x.to_bits()).collect::<HashSet<_>>().len();
    Ok(FeatureVector([
        xs[w - 1],
        stats::mean(xs),
        deltas[s],
        rolling[s],
        stats::percentile_rank_last(xs)?,
        stats::zscore_last(xs)?,
        stats::skewness(xs)?,
        stats::excess_kurtosis(xs)?,
        stats::std_dev(xs)?,
        stats::autocorr_lag1(xs)?,
        stats::mad(xs)?,
        load_ratio,
        mean_peer_delta,
        unique as f64,
    ]))
}

fn sequence_rows(series: &[Vec<f64>], s: usize, start: usize, w: usize) -> Vec<[f64; SEQ_CHANNELS]> {
    let peers = (series.len() - 1) as f64;
    let mut rows: Vec<[f64; SEQ_CHANNELS]> = (start..start + w)
        .map(|t| {
            let mut peer_load = 0.0;
            let mut peer_delta = 0.0;
            for x in series.iter().enumerate().filter(|&(p, _)| p != s).map(|(_, x)| x) {
                peer_load += x[t];
                peer_delta += delta_at(x, t);
            }
            [series[s][t], delta_at(&series[s], t), peer_load / peers, peer_delta / peers, 0.0]
        })
        .collect();
    let own = &series[s][start..start + w];
    let med = median(own);
    let spread = 1.4826 * median(&own.iter().map(|x| (x - med).abs()).collect::<Vec<_>>());
    for (row, x) in rows.iter_mut().zip(own) {
        row[4] = if spread < 1e-9 { 0.0 } else { ((x - med) / spread).clamp(-ROBUST_Z_CLIP, ROBUST_Z_CLIP) };
    }
    rows
}

/// Bound on the within-window robust z-score channel.
pub const ROBUST_Z_CLIP: f64 = 20.0;

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Cuts every switch's reported series into overlapping windows.
///
/// Output is ordered by `(switch_id, start_epoch)`.
pub fn make_windows(log: &TelemetryLog, cfg: &WindowConfig) -> Result<Vec<WindowSample>> {
    cfg.validate()?;
    if log.len() < cfg.window_len {
        return Err(FeatureError::LogTooShort { len: log.len(), window: cfg.window_len });
    }
    if log.num_switches() < 2 {
        return Err(FeatureError::SinglePeerGroup);
    }
    let series = reported_matrix(log);
    let per_switch = cfg.count(log.len());
    let mut out = Vec::with_capacity(per_switch * log.num_switches());
    for s in 0..log.num_switches() {
        for k in 0..per_switch {
            let start = k * cfg.stride;
            let fake = log.records[start..start + cfg.window_len].iter().any(|r| r.misreported[s]);
            out.push(WindowSample {
                session: 0,
                switch_id: s,
                start_epoch: start as u64,
                features: window_features(&series, s, start, cfg)?,
                label: Label::from_fake(fake),
                sequence: sequence_rows(&series, s, start, cfg.window_len),
            });
        }
    }
    Ok(out)
}

/// Header of the feature matrix CSV.
pub fn feature_csv_header() -> String {
    let mut h = FEATURE_NAMES.join(",");
    h.push_str(",switch_id,start_epoch,label");
    h
}

pub fn features_to_csv(samples: &[WindowSample]) -> String {
    let mut out = feature_csv_header();
    out.push('\n');
    for s in samples {
        for v in s.features.0 {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{},{}", s.switch_id, s.start_epoch, s.label);
    }
    out
}

/// Parses a feature CSV back into `(switch_id, start_epoch, features, label)`
/// rows; sequences are not part of the file.
pub fn features_from_csv(csv: &str) -> Result<Vec<(usize, u64, FeatureVector, Label)>> {
    let mut lines = csv.lines();
    if lines.next().map(str::trim) != Some(feature_csv_header().as_str()) {
        return Err(FeatureError::Malformed("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| FeatureError::Malformed(format!("line {}: {m}", i + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_FEATURES + 3 {
            return Err(bad(format!("expected {} fields", NUM_FEATURES + 3)));
        }
        let mut f = [0.0; NUM_FEATURES];
        for (slot, raw) in f.iter_mut().zip(&fields) {
            *slot = raw.trim().parse().map_err(|e| bad(format!("{e}")))?;
        }
        let switch = fields[NUM_FEATURES].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let start = fields[NUM_FEATURES + 1].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let label = fields[NUM_FEATURES + 2].parse()?;
        rows.push((switch, start, FeatureVector(f), label));
    }
    Ok(rows)
}
