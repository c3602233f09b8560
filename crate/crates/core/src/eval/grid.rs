//! Experiment drivers: attack grid, window/stride grid, cross-dataset
//! stress, unsupervised baselines and attribution summaries.

use serde::{Deserialize, Serialize};

use super::artifact::{opt, CsvRecord};
use super::explain::{pca2, shapley3};
use super::pipeline::{run_pipeline, windows_of, PipelineRun, Scenario};
use super::split::select;
use super::{EvalError, Result};
use crate::classifiers::HeadKind;
use crate::detectors::baselines::{Gmm, GmmConfig, IsolationForest, KMeans, Lof};
use crate::detectors::{percentile_threshold, ScoreRow};
use crate::features::{Label, WindowConfig, WindowSample};
use crate::metrics::{compute_metrics, percentile, roc_auc, MetricsReport};
use crate::simcore::TelemetryLog;

const HEADS: [HeadKind; 2] = [HeadKind::Mlp, HeadKind::Gbt];

fn labels(rows: &[ScoreRow]) -> Vec<Label> {
    rows.iter().map(|r| r.label).collect()
}

fn head_probs(run: &PipelineRun, kind: HeadKind, rows: &[ScoreRow]) -> Result<Vec<f64>> {
    let c = run.head(kind);
    Ok(rows.iter().map(|r| c.predict_proba(&run.norm.fuse_row(r).to_array())).collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGridRow {
    pub session: String,
    pub rho: f64,
    pub tau: f64,
    pub phi: f64,
    /// Compromised switch's selection share over attack epochs.
    pub share: f64,
    /// Fraction of attack epochs with a misreport.
    pub misreport_rate: f64,
    pub fake_windows: usize,
    pub test_windows: usize,
    pub f1_fake_mlp: f64,
    pub f1_fake_gbt: f64,
    pub auc_mlp: Option<f64>,
    pub auc_gbt: Option<f64>,
}

impl CsvRecord for AttackGridRow {
    fn header() -> &'static str {
        "session,rho,tau,phi,share,misreport_rate,fake_windows,test_windows,f1_fake_mlp,f1_fake_gbt,auc_mlp,auc_gbt"
    }
    fn fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.session,
            self.rho,
            self.tau,
            self.phi,
            self.share,
            self.misreport_rate,
            self.fake_windows,
            self.test_windows,
            self.f1_fake_mlp,
            self.f1_fake_gbt,
            opt(self.auc_mlp),
            opt(self.auc_gbt)
        )
    }
}

/// Per-session attack statistics and the base run's per-session test
/// metrics.
pub fn attack_grid(scenario: &Scenario, logs: &[TelemetryLog], windows: &[WindowSample], run: &PipelineRun) -> Result<Vec<AttackGridRow>> {
    let test = run.test_scores();
    let mut out = Vec::new();
    for (i, (spec, log)) in scenario.sessions.iter().zip(logs).enumerate() {
        let c = log.attack.compromised_switch;
        let active: Vec<_> = log.records.iter().filter(|r| r.attack_active).collect();
        let n = active.len().max(1) as f64;
        let share = active.iter().filter(|r| r.selected_switch == c).count() as f64 / n;
        let misreport_rate = active.iter().filter(|r| r.misreported[c]).count() as f64 / n;
        let rows: Vec<ScoreRow> = test.iter().filter(|r| r.session == i).cloned().collect();
        let y = labels(&rows);
        let mut f1 = [0.0; 2];
        let mut auc = [None; 2];
        for (k, kind) in HEADS.iter().enumerate() {
            let p = head_probs(run, *kind, &rows)?;
            if !rows.is_empty() {
                f1[k] = compute_metrics(&y, &p, 0.5)?.f1_fake;
            }
            auc[k] = roc_auc(&y, &p).ok();
        }
        out.push(AttackGridRow {
            session: spec.name.clone(),
            rho: spec.stealth_percentile,
            tau: spec.target_share,
            phi: log.attack.misreport_freq(),
            share,
            misreport_rate,
            fake_windows: windows.iter().filter(|w| w.session == i && w.label.is_fake()).count(),
            test_windows: rows.len(),
            f1_fake_mlp: f1[0],
            f1_fake_gbt: f1[1],
            auc_mlp: auc[0],
            auc_gbt: auc[1],
        });
    }
    Ok(out)
}

/// The eight `(window, stride)` settings of the sensitivity study.
pub const WINDOW_GRID: [(usize, usize); 8] = [(5, 5), (10, 5), (10, 10), (15, 5), (15, 10), (15, 15), (20, 10), (20, 15)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGridRow {
    pub window: usize,
    pub stride: usize,
    pub windows: usize,
    pub f1_fake_mlp: f64,
    pub f1_fake_gbt: f64,
    pub f1_real_mlp: f64,
    pub f1_real_gbt: f64,
    pub auc_mlp: Option<f64>,
    pub auc_gbt: Option<f64>,
}

impl CsvRecord for WindowGridRow {
    fn header() -> &'static str {
        "window,stride,windows,f1_fake_mlp,f1_fake_gbt,f1_real_mlp,f1_real_gbt,auc_mlp,auc_gbt"
    }
    fn fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.window,
            self.stride,
            self.windows,
            self.f1_fake_mlp,
            self.f1_fake_gbt,
            self.f1_real_mlp,
            self.f1_real_gbt,
            opt(self.auc_mlp),
            opt(self.auc_gbt)
        )
    }
}

impl WindowGridRow {
    pub fn from_run(cfg: &WindowConfig, windows: usize, run: &PipelineRun) -> Self {
        let get = |k| run.head_report(k, "fused").cloned().expect("fused heads are always evaluated");
        let (m, g) = (get(HeadKind::Mlp), get(HeadKind::Gbt));
        Self {
            window: cfg.window_len,
            stride: cfg.stride,
            windows,
            f1_fake_mlp: m.f1_fake,
            f1_fake_gbt: g.f1_fake,
            f1_real_mlp: m.f1_real,
            f1_real_gbt: g.f1_real,
            auc_mlp: m.auc,
            auc_gbt: g.auc,
        }
    }
}

/// Retrains the full pipeline once per `(window, stride)` setting on the
/// same simulated sessions.
pub fn window_grid(scenario: &Scenario, logs: &[TelemetryLog], grid: &[(usize, usize)]) -> Result<Vec<WindowGridRow>> {
    grid.iter()
        .map(|&(w, s)| {
            let mut sc = scenario.clone();
            sc.window = WindowConfig::new(w, s);
            sc.window.validate()?;
            let windows = windows_of(logs, &sc.window)?;
            let run = run_pipeline(&sc, &windows)?;
            Ok(WindowGridRow::from_run(&sc.window, windows.len(), &run))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDatasetRow {
    pub dataset: String,
    pub head: HeadKind,
    pub windows: usize,
    pub fake_windows: usize,
    pub f1_fake: f64,
    pub f1_real: f64,
    pub auc: Option<f64>,
    pub accuracy: f64,
}

impl CsvRecord for CrossDatasetRow {
    fn header() -> &'static str {
        "dataset,head,windows,fake_windows,f1_fake,f1_real,auc,accuracy"
    }
    fn fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset,
            self.head,
            self.windows,
            self.fake_windows,
            self.f1_fake,
            self.f1_real,
            opt(self.auc),
            self.accuracy
        )
    }
}

/// Seed offset so that stress datasets never replay the training traces.
pub const VARIANT_SEED_OFFSET: u64 = 7919;

/// The stress variants: longer gaps between workflow launches, and a
/// shorter attack window.
pub fn cross_variants(base: &Scenario) -> Vec<(String, Scenario)> {
    let mut out = Vec::new();
    for (k, si) in [20.0, 25.0].into_iter().enumerate() {
        let mut sc = base.clone();
        sc.traffic.session_interval = si;
        sc.seed = base.seed.wrapping_add(VARIANT_SEED_OFFSET * (k as u64 + 1));
        out.push((format!("interval_{si}"), sc));
    }
    let mut sc = base.clone();
    sc.sessions.iter_mut().for_each(|s| s.attack_window = 500);
    sc.seed = base.seed.wrapping_add(VARIANT_SEED_OFFSET * 3);
    out.push(("epoch_500".to_string(), sc));
    out
}

/// Scores each variant with the models trained on the base scenario.
pub fn cross_dataset(base: &Scenario, run: &PipelineRun) -> Result<Vec<CrossDatasetRow>> {
    let mut out = Vec::new();
    for (name, sc) in cross_variants(base) {
        let windows = windows_of(&sc.simulate()?, &base.window)?;
        for kind in HEADS {
            let r: MetricsReport = run.evaluate_windows(&windows, kind)?;
            out.push(CrossDatasetRow {
                dataset: name.clone(),
                head: kind,
                windows: windows.len(),
                fake_windows: windows.iter().filter(|w| w.label.is_fake()).count(),
                f1_fake: r.f1_fake,
                f1_real: r.f1_real,
                auc: r.auc,
                accuracy: r.accuracy,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub inputs: String,
    pub precision_fake: f64,
    pub recall_fake: f64,
    pub f1_fake: f64,
    pub auc: Option<f64>,
}

impl CsvRecord for BaselineRow {
    fn header() -> &'static str {
        "model,inputs,precision_fake,recall_fake,f1_fake,auc"
    }
    fn fields(&self) -> String {
        format!("{},{},{},{},{},{}", self.model, self.inputs, self.precision_fake, self.recall_fake, self.f1_fake, opt(self.auc))
    }
}

/// Percentile of REAL-validation scores used to threshold the baselines.
pub const BASELINE_PERCENTILE: f64 = 90.0;

struct BaselineData {
    train: Vec<Vec<f64>>,
    val_real: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
}

/// Unsupervised baselines fitted on REAL training windows, on either the
/// fused triplet or the transformer latent, each thresholded at the 90th
/// percentile of its REAL-validation scores.
pub fn baselines(run: &PipelineRun, windows: &[WindowSample], seed: u64) -> Result<Vec<BaselineRow>> {
    let (train_w, val_w, test_w) = (select(windows, &run.split.train), select(windows, &run.split.val), select(windows, &run.split.test));
    let real = |ws: &[WindowSample]| -> Vec<WindowSample> { ws.iter().filter(|w| w.label == Label::Real).cloned().collect() };
    let fused = |ws: &[WindowSample]| -> Vec<Vec<f64>> {
        ws.iter().map(|w| run.norm.fuse_row(&run.bundle.score(w)).to_array().to_vec()).collect()
    };
    let latent = |ws: &[WindowSample]| -> Vec<Vec<f64>> { ws.iter().map(|w| run.bundle.transformer.latent(&w.sequence)).collect() };
    let y: Vec<Label> = test_w.iter().map(|w| w.label).collect();
    let (train_real, val_real) = (real(&train_w), real(&val_w));
    let combined = BaselineData { train: fused(&train_real), val_real: fused(&val_real), test: fused(&test_w) };
    let latents = BaselineData { train: latent(&train_real), val_real: latent(&val_real), test: latent(&test_w) };

    let evaluate = |model: &str, inputs: &str, data: &BaselineData, score: &dyn Fn(&[f64]) -> f64| -> Result<BaselineRow> {
        let val: Vec<f64> = data.val_real.iter().map(|x| score(x)).collect();
        let s: Vec<f64> = data.test.iter().map(|x| score(x)).collect();
        let thr = percentile_threshold(&val, BASELINE_PERCENTILE).ok_or(EvalError::TooSmall(val.len()))?;
        let r = compute_metrics(&y, &s.iter().map(|&v| if v > thr { 1.0 } else { 0.0 }).collect::<Vec<_>>(), 0.5)?;
        Ok(BaselineRow {
            model: model.into(),
            inputs: inputs.into(),
            precision_fake: r.precision_fake,
            recall_fake: r.recall_fake,
            f1_fake: r.f1_fake,
            auc: roc_auc(&y, &s).ok(),
        })
    };

    let iforest = IsolationForest::fit(&combined.train, 100, 256, seed)?;
    let gmm_c = Gmm::fit(&combined.train, &GmmConfig { seed, ..Default::default() })?;
    let lof = Lof::fit(&combined.train, 20)?;
    let gmm_l = Gmm::fit(&latents.train, &GmmConfig { seed, ..Default::default() })?;
    let km = KMeans::fit(&latents.train, 2, seed)?;
    Ok(vec![
        evaluate("isolation_forest", "combined", &combined, &|x| iforest.score(x))?,
        evaluate("gmm", "combined", &combined, &|x| gmm_c.score(x))?,
        evaluate("lof", "combined", &combined, &|x| lof.score(x))?,
        evaluate("gmm", "latent", &latents, &|x| gmm_l.score(x))?,
        evaluate("kmeans", "latent", &latents, &|x| km.score(x))?,
    ])
}

/// Mean absolute attribution per triplet component over test queries,
/// plus a 2-D projection of test latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub head: HeadKind,
    pub queries: usize,
    pub background: usize,
    pub mean_abs: [f64; 3],
    pub max_efficiency_gap: f64,
    pub pca_explained: [f64; 2],
    /// `(label, pc1, pc2)` per projected test window.
    pub projection: Vec<(Label, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRow {
    pub feature: String,
    pub mean_abs_attribution: f64,
}

impl CsvRecord for ExplainRow {
    fn header() -> &'static str {
        "feature,mean_abs_attribution"
    }
    fn fields(&self) -> String {
        format!("{},{}", self.feature, self.mean_abs_attribution)
    }
}

/// Tidy plot point: series name, x, y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

impl CsvRecord for PlotPoint {
    fn header() -> &'static str {
        "series,x,y"
    }
    fn fields(&self) -> String {
        format!("{},{},{}", self.series, self.x, self.y)
    }
}

impl ExplainSummary {
    pub fn rows(&self) -> Vec<ExplainRow> {
        ["recon", "stat", "mahal"]
            .iter()
            .zip(self.mean_abs)
            .map(|(f, v)| ExplainRow { feature: f.to_string(), mean_abs_attribution: v })
            .collect()
    }

    pub fn plot_points(&self) -> Vec<PlotPoint> {
        self.projection.iter().map(|&(l, x, y)| PlotPoint { series: l.to_string(), x, y }).collect()
    }
}

/// Attributions of the head's calibrated probability over up to
/// `queries` test windows, against `background` training triplets.
pub fn explain(run: &PipelineRun, windows: &[WindowSample], kind: HeadKind, queries: usize, background: usize) -> Result<ExplainSummary> {
    let c = run.head(kind);
    let fuse = |r: &ScoreRow| run.norm.fuse_row(r).to_array();
    let tr = select(&run.scores, &run.split.train);
    let step = (tr.len() / background.max(1)).max(1);
    let bg: Vec<[f64; 3]> = tr.iter().step_by(step).take(background).map(fuse).collect();
    let test = run.test_scores();
    let qstep = (test.len() / queries.max(1)).max(1);
    let predict = |x: &[f64; 3]| c.predict_proba(x).unwrap_or(f64::NAN);
    let mut sums = [0.0; 3];
    let mut gap: f64 = 0.0;
    let mut n = 0;
    for r in test.iter().step_by(qstep).take(queries) {
        let a = shapley3(predict, &fuse(r), &bg)?;
        for k in 0..3 {
            sums[k] += a.values[k].abs();
        }
        gap = gap.max((a.values.iter().sum::<f64>() - (a.prediction - a.base)).abs());
        n += 1;
    }
    let test_w = select(windows, &run.split.test);
    let latents: Vec<Vec<f64>> = test_w.iter().map(|w| run.bundle.transformer.latent(&w.sequence)).collect();
    let p = pca2(&latents)?;
    let projection = test_w.iter().zip(&p.projection).map(|(w, v)| (w.label, v[0], v[1])).collect();
    Ok(ExplainSummary {
        head: kind,
        queries: n,
        background: bg.len(),
        mean_abs: sums.map(|s| s / n.max(1) as f64),
        max_efficiency_gap: gap,
        pca_explained: p.explained,
        projection,
    })
}

/// Median of a sample, or `None` when empty.
pub fn median(xs: &[f64]) -> Option<f64> {
    percentile(xs, 50.0)
}
