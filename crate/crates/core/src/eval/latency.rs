use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifact::CsvRecord;
use super::pipeline::PipelineRun;
use super::{EvalError, Result};
use crate::classifiers::HeadKind;
use crate::features::WindowSample;
use crate::metrics::percentile;

/// Minimum number of timed samples per module.
pub const MIN_LATENCY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub module: String,
    pub samples: usize,
    pub median_s: f64,
    pub p90_s: f64,
}

impl CsvRecord for LatencyRow {
    fn header() -> &'static str {
        "module,samples,median_s,p90_s"
    }
    fn fields(&self) -> String {
        format!("{},{},{},{}", self.module, self.samples, self.median_s, self.p90_s)
    }
}

pub const FUSED_EXCLUDING_TRANSFORMER: &str = "fused_excluding_transformer";
pub const FUSED_INCLUDING_TRANSFORMER: &str = "fused_including_transformer";

fn time_each(samples: usize, warmup: usize, mut f: impl FnMut(usize)) -> (f64, f64) {
    for i in 0..warmup {
        f(i);
    }
    let mut t = Vec::with_capacity(samples);
    for i in 0..samples {
        let start = Instant::now();
        f(i);
        t.push(start.elapsed().as_secs_f64());
    }
    (percentile(&t, 50.0).unwrap_or(f64::NAN), percentile(&t, 90.0).unwrap_or(f64::NAN))
}

/// Warm per-sample wall-clock time of each scoring stage, cycling through
/// `windows`. Transformer outputs are precomputed for the stages that
/// exclude it.
pub fn bench_latency(run: &PipelineRun, windows: &[WindowSample], samples: usize) -> Result<Vec<LatencyRow>> {
    if windows.is_empty() {
        return Err(EvalError::TooSmall(0));
    }
    let samples = samples.max(MIN_LATENCY_SAMPLES);
    let warmup = (samples / 10).max(10);
    let b = &run.bundle;
    let pre: Vec<(f64, Vec<f64>)> = windows.iter().map(|w| b.transformer.recon_and_latent(&w.sequence)).collect();
    let triplets: Vec<[f64; 3]> = windows.iter().zip(&pre).map(|(w, (recon, latent))| {
        run.norm.fuse(*recon, b.stat.score(w.features.stat_part()), b.mahal.distance(latent)).to_array()
    }).collect();
    let n = windows.len();
    let (mlp, gbt) = (run.head(HeadKind::Mlp), run.head(HeadKind::Gbt));
    let mut rows = Vec::new();
    let mut push = |module: &str, (median_s, p90_s): (f64, f64)| {
        rows.push(LatencyRow { module: module.to_string(), samples, median_s, p90_s });
    };
    push("mlp", time_each(samples, warmup, |i| {
        black_box(mlp.predict_proba(black_box(&triplets[i % n])).ok());
    }));
    push("stat_ae", time_each(samples, warmup, |i| {
        black_box(b.stat.score(black_box(windows[i % n].features.stat_part())));
    }));
    push("mahalanobis", time_each(samples, warmup, |i| {
        black_box(b.mahal.distance(black_box(&pre[i % n].1)));
    }));
    push("gbt_calibrated", time_each(samples, warmup, |i| {
        black_box(gbt.predict_proba(black_box(&triplets[i % n])).ok());
    }));
    push("transformer_ae", time_each(samples, warmup, |i| {
        black_box(b.transformer.recon_and_latent(black_box(&windows[i % n].sequence)));
    }));
    push(FUSED_EXCLUDING_TRANSFORMER, time_each(samples, warmup, |i| {
        let w = &windows[i % n];
        let (recon, latent) = &pre[i % n];
        let t = run.norm.fuse(*recon, b.stat.score(w.features.stat_part()), b.mahal.distance(latent));
        black_box(gbt.predict_proba(&t.to_array()).ok());
    }));
    push(FUSED_INCLUDING_TRANSFORMER, time_each(samples, warmup, |i| {
        let r = b.score(black_box(&windows[i % n]));
        black_box(gbt.predict_proba(&run.norm.fuse_row(&r).to_array()).ok());
    }));
    Ok(rows)
}
