use serde::{Deserialize, Serialize};

use super::split::{select, SplitIndices, SplitSpec};
use super::Result;
use crate::classifiers::{Classifier, HeadKind};
use crate::detectors::{
    threshold_report, FusionNorm, ScoreRow, StatAeConfig, TransformerAeConfig, UnsupervisedBundle,
};
use crate::features::{make_windows, Label, WindowConfig, WindowSample};
use crate::metrics::{compute_metrics, roc_auc, MetricsReport};
use crate::simcore::{run_session, AttackConfig, TelemetryLog, TrafficConfig};

/// One simulated session of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub name: String,
    pub target_share: f64,
    pub stealth_percentile: f64,
    pub attack_start: u64,
    pub attack_window: u64,
}

/// Everything needed to regenerate a dataset and train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_switches: usize,
    pub num_epochs: usize,
    pub traffic: TrafficConfig,
    pub sessions: Vec<SessionSpec>,
    pub window: WindowConfig,
    pub split: SplitSpec,
    pub transformer: TransformerAeConfig,
    pub stat_ae: StatAeConfig,
    pub seed: u64,
}

/// The four `(rho, tau)` attack combinations used as the base dataset.
pub const ATTACK_GRID: [(f64, f64); 4] = [(0.01, 0.48), (0.01, 0.29), (0.10, 0.48), (0.10, 0.29)];

pub const BASE_EPOCHS: usize = 2000;
pub const BASE_ATTACK_START: u64 = 200;

impl Scenario {
    /// Four sessions, one per attack combination. Each starts with honest
    /// reporting and the attack then runs to the end of the session.
    pub fn base(seed: u64) -> Self {
        let sessions = ATTACK_GRID
            .iter()
            .map(|&(rho, tau)| SessionSpec {
                name: format!("rho{rho}_tau{tau}"),
                target_share: tau,
                stealth_percentile: rho,
                attack_start: BASE_ATTACK_START,
                attack_window: (BASE_EPOCHS - BASE_ATTACK_START as usize) as u64,
            })
            .collect();
        Self {
            num_switches: 4,
            num_epochs: BASE_EPOCHS,
            traffic: TrafficConfig::default(),
            sessions,
            window: WindowConfig::default(),
            split: SplitSpec { seed, ..Default::default() },
            transformer: TransformerAeConfig { seed, ..Default::default() },
            stat_ae: StatAeConfig { seed, ..Default::default() },
            seed,
        }
    }

    pub fn session_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
    }

    pub fn attack_config(&self, s: &SessionSpec) -> Result<AttackConfig> {
        Ok(AttackConfig::new(self.num_switches, s.target_share, s.stealth_percentile, s.attack_window)?
            .with_start(s.attack_start))
    }

    pub fn simulate(&self) -> Result<Vec<TelemetryLog>> {
        self.sessions
            .iter()
            .enumerate()
            .map(|(i, s)| Ok(run_session(self.attack_config(s)?, self.traffic.clone(), self.num_epochs, self.session_seed(i))?))
            .collect()
    }
}

/// Windows of every log, tagged with their session index.
pub fn windows_of(logs: &[TelemetryLog], cfg: &WindowConfig) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        let mut w = make_windows(log, cfg)?;
        w.iter_mut().for_each(|s| s.session = i);
        out.extend(w);
    }
    Ok(out)
}

pub const THRESHOLD_PERCENTILES: [f64; 5] = [90.0, 92.0, 94.0, 96.0, 98.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub percentile: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadResult {
    pub head: HeadKind,
    /// Which triplet components the head sees.
    pub inputs: String,
    pub report: MetricsReport,
}

/// Which triplet components are visible to a head; hidden ones are zeroed.
pub const BRANCHES: [(&str, [bool; 3]); 4] = [
    ("fused", [true, true, true]),
    ("recon", [true, false, false]),
    ("stat", [false, true, false]),
    ("mahal", [false, false, true]),
];

pub fn mask(t: [f64; 3], m: [bool; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| if m[i] { t[i] } else { 0.0 })
}

/// Trained artefacts and held-out results of one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRun {
    pub split: SplitIndices,
    pub bundle: UnsupervisedBundle,
    pub norm: FusionNorm,
    pub scores: Vec<ScoreRow>,
    pub heads: Vec<(HeadKind, Classifier)>,
    pub thresholds: Vec<ThresholdRow>,
    pub head_results: Vec<HeadResult>,
    /// Test-split AUC of each raw unsupervised score.
    pub branch_auc: Vec<(String, Option<f64>)>,
}

impl PipelineRun {
    pub fn test_scores(&self) -> Vec<ScoreRow> {
        select(&self.scores, &self.split.test)
    }

    pub fn head(&self, kind: HeadKind) -> &Classifier {
        &self.heads.iter().find(|(k, _)| *k == kind).expect("both heads are trained").1
    }

    pub fn head_report(&self, kind: HeadKind, inputs: &str) -> Option<&MetricsReport> {
        self.head_results.iter().find(|r| r.head == kind && r.inputs == inputs).map(|r| &r.report)
    }

    pub fn best_threshold_f1(&self) -> f64 {
        self.thresholds.iter().map(|t| t.report.f1_fake).fold(0.0, f64::max)
    }

    /// Scores, fuses and classifies windows of another dataset with the
    /// trained models.
    pub fn evaluate_windows(&self, windows: &[WindowSample], kind: HeadKind) -> Result<MetricsReport> {
        let rows = self.bundle.score_all(windows);
        report_head(self.head(kind), &self.norm, &rows, [true; 3])
    }
}

fn fused(norm: &FusionNorm, rows: &[ScoreRow], m: [bool; 3]) -> Vec<[f64; 3]> {
    rows.iter().map(|r| mask(norm.fuse_row(r).to_array(), m)).collect()
}

fn labels(rows: &[ScoreRow]) -> Vec<Label> {
    rows.iter().map(|r| r.label).collect()
}

fn report_head(c: &Classifier, norm: &FusionNorm, rows: &[ScoreRow], m: [bool; 3]) -> Result<MetricsReport> {
    let p = fused(norm, rows, m).iter().map(|t| c.predict_proba(t)).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(compute_metrics(&labels(rows), &p, 0.5)?)
}

/// Splits `windows`, trains the unsupervised scorers on the REAL training
/// windows, then fits both heads on every branch combination.
pub fn run_pipeline(scenario: &Scenario, windows: &[WindowSample]) -> Result<PipelineRun> {
    let split = scenario.split.split(windows.len())?;
    let train = select(windows, &split.train);
    let bundle = UnsupervisedBundle::train(&train, &scenario.transformer, &scenario.stat_ae)?;
    let scores = bundle.score_all(windows);
    let (tr, va, te) = (select(&scores, &split.train), select(&scores, &split.val), select(&scores, &split.test));
    let norm = FusionNorm::fit(&tr)?;

    let real_val_recon: Vec<f64> = va.iter().filter(|r| r.label == Label::Real).map(|r| r.recon).collect();
    let test_recon: Vec<f64> = te.iter().map(|r| r.recon).collect();
    let thresholds = THRESHOLD_PERCENTILES
        .iter()
        .map(|&p| Ok(ThresholdRow { percentile: p, report: threshold_report(&labels(&te), &test_recon, &real_val_recon, p)? }))
        .collect::<Result<Vec<_>>>()?;

    let mut heads = Vec::new();
    let mut head_results = Vec::new();
    for kind in [HeadKind::Mlp, HeadKind::Gbt] {
        for (name, m) in BRANCHES {
            let c = Classifier::train(kind, &fused(&norm, &tr, m), &labels(&tr), &fused(&norm, &va, m), &labels(&va), true, scenario.seed)?;
            head_results.push(HeadResult { head: kind, inputs: name.to_string(), report: report_head(&c, &norm, &te, m)? });
            if name == "fused" {
                heads.push((kind, c));
            }
        }
    }
    let test_labels = labels(&te);
    let branch_auc = ["recon", "stat", "mahal"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let s: Vec<f64> = te.iter().map(|r| r.triplet()[i]).collect();
            (name.to_string(), roc_auc(&test_labels, &s).ok())
        })
        .collect();
    Ok(PipelineRun { split, bundle, norm, scores, heads, thresholds, head_results, branch_auc })
}

impl super::artifact::CsvRecord for ThresholdRow {
    fn header() -> &'static str {
        "percentile,threshold,f1_fake,f1_real,precision_fake,recall_fake,accuracy,auc"
    }
    fn fields(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{}",
            self.percentile,
            r.threshold,
            r.f1_fake,
            r.f1_real,
            r.precision_fake,
            r.recall_fake,
            r.accuracy,
            super::artifact::opt(r.auc)
        )
    }
}

impl super::artifact::CsvRecord for HeadResult {
    fn header() -> &'static str {
        "head,inputs,precision_fake,recall_fake,f1_fake,f1_real,accuracy,auc,tp,fp,fn,tn"
    }
    fn fields(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.head,
            self.inputs,
            r.precision_fake,
            r.recall_fake,
            r.f1_fake,
            r.f1_real,
            r.accuracy,
            super::artifact::opt(r.auc),
            r.tp,
            r.fp,
            r.fn_,
            r.tn
        )
    }
}
