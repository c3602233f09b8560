use std::path::{Path, PathBuf};

use misreport_core::classifiers::{Classifier, HeadKind, TRIPLET_DIM};
use misreport_core::detectors::{scores_from_csv, scores_to_csv, FusionNorm, ScoreRow, UnsupervisedBundle};
use misreport_core::eval::artifact::{CsvRecord, HEAD_KIND, UNSUPERVISED_KIND};
use misreport_core::eval::grid::{PlotPoint, WINDOW_GRID};
use misreport_core::eval::split::select;
use misreport_core::eval::{
    attack_grid, baselines, bench_latency, cross_dataset, explain, run_pipeline, window_grid, windows_of, write_json,
    write_results, Artifact, HeadArtifact, PipelineRun, Provenance, Scenario, SplitSpec, UnsupervisedModel,
};
use misreport_core::features::{features_to_csv, Label, WindowConfig, WindowSample};
use misreport_core::fsutil::atomic_write;
use misreport_core::metrics::compute_metrics;
use misreport_core::qoe::{self, SpoofConfig, SPOOF_LEVELS};
use misreport_core::simcore::{read_log_dir, run_session, write_log_dir, AttackConfig, TelemetryLog, TrafficConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{
    BenchArgs, Cli, CliError, Command, ExplainArgs, ExtractArgs, GridArgs, PipelineArgs, QoeArgs, ScoreArgs, SimulateArgs,
    TrainHeadArgs, TrainUnsupArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Extract(a) => extract(cli, a),
        Command::TrainUnsup(a) => train_unsup(cli, a),
        Command::Score(a) => score(cli, a),
        Command::TrainHead(a) => train_head(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Grid(a) => grid(cli, a),
        Command::Qoe(a) => qoe_cmd(cli, a),
        Command::BenchLatency(a) => bench(cli, a),
        Command::Explain(a) => explain_cmd(cli, a),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn window_config(window: usize, stride: usize) -> Result<WindowConfig> {
    let cfg = WindowConfig::new(window, stride);
    cfg.validate()?;
    Ok(cfg)
}

fn read_logs(inputs: &[PathBuf]) -> Result<Vec<TelemetryLog>> {
    inputs.iter().map(|p| Ok(read_log_dir(p)?)).collect()
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Value> {
    let epsilon = a.epsilon.unwrap_or(a.epochs as u64);
    let mut attack = AttackConfig::new(a.switches, a.tau, a.rho, epsilon)?
        .with_start(a.attack_start)
        .with_compromised(a.compromised)?;
    if let Some(phi) = a.phi {
        attack = attack.with_misreport_freq(phi)?;
    }
    let mut traffic = TrafficConfig::default();
    if let Some(v) = a.session_interval {
        traffic.session_interval = v;
    }
    if let Some(v) = a.background_rate {
        traffic.background_rate = v;
    }
    if let Some(v) = a.packet_bytes {
        traffic.background_packet_bytes = v;
    }
    if let Some(v) = a.workflow_rate {
        traffic.workflow_rate = v;
    }
    let log = run_session(attack, traffic, a.epochs, cli.seed)?;
    write_log_dir(&log, &cli.out)?;
    let c = log.attack.compromised_switch;
    let active: Vec<_> = log.records.iter().filter(|r| r.attack_active).collect();
    let n = active.len().max(1) as f64;
    Ok(json!({
        "out": path_str(&cli.out),
        "epochs": log.records.len(),
        "phi": log.attack.misreport_freq(),
        "attack_epochs": active.len(),
        "compromised_share": active.iter().filter(|r| r.selected_switch == c).count() as f64 / n,
        "misreport_rate": active.iter().filter(|r| r.misreported[c]).count() as f64 / n,
    }))
}

fn extract(cli: &Cli, a: &ExtractArgs) -> Result<Value> {
    let cfg = window_config(a.window, a.stride)?;
    let windows = windows_of(&read_logs(&a.inputs)?, &cfg)?;
    atomic_write(&cli.out, features_to_csv(&windows).as_bytes())?;
    Ok(json!({
        "out": path_str(&cli.out),
        "windows": windows.len(),
        "fake": windows.iter().filter(|w| w.label.is_fake()).count(),
    }))
}

fn train_unsup(cli: &Cli, a: &TrainUnsupArgs) -> Result<Value> {
    let mut sc = Scenario::base(cli.seed);
    sc.window = window_config(a.window, a.stride)?;
    if let Some(e) = a.tae_epochs {
        sc.transformer.epochs = e;
    }
    let windows = windows_of(&read_logs(&a.inputs)?, &sc.window)?;
    let split = sc.split.split(windows.len())?;
    let train = select(&windows, &split.train);
    let bundle = UnsupervisedBundle::train(&train, &sc.transformer, &sc.stat_ae)?;
    let norm = FusionNorm::fit(&bundle.score_all(&train))?;
    let model = UnsupervisedModel { bundle, norm, window: sc.window };
    Artifact::new(UNSUPERVISED_KIND, cli.seed, model.clone()).save(&cli.out)?;
    Ok(json!({
        "out": path_str(&cli.out),
        "train_windows": train.len(),
        "initial_loss": model.bundle.transformer.initial_loss,
        "final_loss": model.bundle.transformer.final_loss,
    }))
}

fn artifact_kind(path: &Path) -> Result<String> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    v.get("kind")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("{} is not a model artifact", path.display())))
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<Value> {
    match artifact_kind(&a.model)?.as_str() {
        UNSUPERVISED_KIND => {
            if a.inputs.is_empty() {
                return Err(CliError::Usage("an unsupervised model scores telemetry given with --in".into()));
            }
            let m: Artifact<UnsupervisedModel> = Artifact::load(&a.model, UNSUPERVISED_KIND)?;
            let windows = windows_of(&read_logs(&a.inputs)?, &m.payload.window)?;
            let rows = m.payload.bundle.score_all(&windows);
            atomic_write(&cli.out, scores_to_csv(&rows).as_bytes())?;
            Ok(json!({ "out": path_str(&cli.out), "windows": rows.len() }))
        }
        HEAD_KIND => {
            let scores = a.scores.as_ref().ok_or_else(|| CliError::Usage("a head scores a file given with --scores".into()))?;
            let m: Artifact<HeadArtifact> = Artifact::load(&a.model, HEAD_KIND)?;
            let rows = scores_from_csv(&std::fs::read_to_string(scores)?, 0)?;
            let probs: Vec<f64> = rows
                .iter()
                .map(|r| m.payload.classifier.predict_proba(&m.payload.norm.fuse_row(r).to_array()))
                .collect::<std::result::Result<_, _>>()?;
            let mut csv = String::from("switch_id,start_epoch,probability,prediction,label\n");
            for (r, p) in rows.iter().zip(&probs) {
                let pred = misreport_core::metrics::classify(*p, a.threshold);
                csv.push_str(&format!("{},{},{},{},{}\n", r.switch_id, r.start_epoch, p, pred, r.label));
            }
            atomic_write(&cli.out, csv.as_bytes())?;
            let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
            let metrics = compute_metrics(&labels, &probs, a.threshold)?;
            Ok(json!({ "out": path_str(&cli.out), "rows": rows.len(), "metrics": metrics }))
        }
        other => Err(CliError::Usage(format!("unknown artifact kind {other:?}"))),
    }
}

fn triplets(norm: &FusionNorm, rows: &[ScoreRow]) -> Vec<[f64; TRIPLET_DIM]> {
    rows.iter().map(|r| norm.fuse_row(r).to_array()).collect()
}

fn train_head(cli: &Cli, a: &TrainHeadArgs) -> Result<Value> {
    let rows = scores_from_csv(&std::fs::read_to_string(&a.scores)?, 0)?;
    let split = SplitSpec { seed: cli.seed, ..Default::default() }.split(rows.len())?;
    let (tr, va, te) = (select(&rows, &split.train), select(&rows, &split.val), select(&rows, &split.test));
    let norm = FusionNorm::fit(&tr)?;
    let labels = |r: &[ScoreRow]| -> Vec<Label> { r.iter().map(|x| x.label).collect() };
    let c = Classifier::train(a.head, &triplets(&norm, &tr), &labels(&tr), &triplets(&norm, &va), &labels(&va), a.calibrate, cli.seed)?;
    let probs: Vec<f64> = triplets(&norm, &te).iter().map(|t| c.predict_proba(t)).collect::<std::result::Result<_, _>>()?;
    let metrics = compute_metrics(&labels(&te), &probs, 0.5)?;
    Artifact::new(HEAD_KIND, cli.seed, HeadArtifact { head: a.head, classifier: c, norm }).save(&cli.out)?;
    Ok(json!({ "out": path_str(&cli.out), "head": a.head.to_string(), "test_metrics": metrics }))
}

/// The base scenario adjusted by the pipeline flags.
pub fn scenario(seed: u64, p: &PipelineArgs) -> Result<Scenario> {
    let mut sc = Scenario::base(seed);
    if let Some(n) = p.sim_epochs {
        sc.num_epochs = n;
        for s in &mut sc.sessions {
            s.attack_window = (n as u64).saturating_sub(s.attack_start);
        }
    }
    sc.window = window_config(p.window, p.stride)?;
    if let Some(e) = p.tae_epochs {
        sc.transformer.epochs = e;
    }
    Ok(sc)
}

struct Base {
    scenario: Scenario,
    logs: Vec<TelemetryLog>,
    windows: Vec<WindowSample>,
    run: PipelineRun,
}

fn base(seed: u64, p: &PipelineArgs) -> Result<Base> {
    let scenario = scenario(seed, p)?;
    let logs = if p.inputs.is_empty() { scenario.simulate()? } else { read_logs(&p.inputs)? };
    let windows = windows_of(&logs, &scenario.window)?;
    let run = run_pipeline(&scenario, &windows)?;
    Ok(Base { scenario, logs, windows, run })
}

fn provenance(command: &str, cli: &Cli, b: &Base, p: &PipelineArgs) -> Result<Provenance> {
    let source = if p.inputs.is_empty() {
        "simulated base sessions".to_string()
    } else {
        format!("telemetry from {}", p.inputs.iter().map(|x| x.display().to_string()).collect::<Vec<_>>().join(", "))
    };
    Ok(Provenance::new(command, cli.seed, serde_json::to_value(&b.scenario)?).with_note(source))
}

fn written<R: CsvRecord + Serialize>(dir: &Path, stem: &str, rows: &[R], prov: &Provenance) -> Result<Vec<String>> {
    Ok(write_results(dir, stem, rows, prov)?.iter().map(|p| path_str(p)).collect())
}

fn evaluate(cli: &Cli, p: &PipelineArgs) -> Result<Value> {
    let b = base(cli.seed, p)?;
    let prov = provenance("evaluate", cli, &b, p)?;
    let dir = &cli.out;
    let mut files = written(dir, "thresholds", &b.run.thresholds, &prov)?;
    files.extend(written(dir, "heads", &b.run.head_results, &prov)?);
    let scores_path = dir.join("scores.csv");
    atomic_write(&scores_path, scores_to_csv(&b.run.scores).as_bytes())?;
    files.push(path_str(&scores_path));
    let models = dir.join("models");
    let model = UnsupervisedModel { bundle: b.run.bundle.clone(), norm: b.run.norm.clone(), window: b.scenario.window };
    Artifact::new(UNSUPERVISED_KIND, cli.seed, model).save(&models.join("unsupervised.json"))?;
    for (kind, c) in &b.run.heads {
        let h = HeadArtifact { head: *kind, classifier: c.clone(), norm: b.run.norm.clone() };
        Artifact::new(HEAD_KIND, cli.seed, h).save(&models.join(format!("head_{kind}.json")))?;
    }
    let summary = json!({
        "windows": b.windows.len(),
        "fake_windows": b.windows.iter().filter(|w| w.label.is_fake()).count(),
        "branch_auc": b.run.branch_auc,
        "best_threshold_f1": b.run.best_threshold_f1(),
        "fused": {
            "mlp": b.run.head_report(HeadKind::Mlp, "fused"),
            "gbt": b.run.head_report(HeadKind::Gbt, "fused"),
        },
    });
    write_json(&dir.join("summary.json"), &summary, &prov)?;
    files.push(path_str(&dir.join("summary.json")));
    Ok(json!({ "out": path_str(dir), "files": files, "summary": summary }))
}

fn grid(cli: &Cli, a: &GridArgs) -> Result<Value> {
    let kinds = ["attack", "window", "cross", "baselines"];
    let selected: Vec<&str> = match a.kind.as_str() {
        "all" => kinds.to_vec(),
        k if kinds.contains(&k) => vec![k],
        k => return Err(CliError::Usage(format!("unknown grid kind {k:?}; expected one of {kinds:?} or all"))),
    };
    let b = base(cli.seed, &a.pipeline)?;
    let prov = provenance("grid", cli, &b, &a.pipeline)?;
    let dir = &cli.out;
    let mut files = Vec::new();
    for k in selected {
        match k {
            "attack" => files.extend(written(dir, "attack_grid", &attack_grid(&b.scenario, &b.logs, &b.windows, &b.run)?, &prov)?),
            "window" => files.extend(written(dir, "window_grid", &window_grid(&b.scenario, &b.logs, &WINDOW_GRID)?, &prov)?),
            "cross" => {
                let p = prov.clone().with_note(
                    "interval_20 and interval_25 set session_interval to 20 s and 25 s; epoch_500 sets the attack window to 500 epochs; models are not retrained",
                );
                files.extend(written(dir, "cross_dataset", &cross_dataset(&b.scenario, &b.run)?, &p)?)
            }
            _ => files.extend(written(dir, "baselines", &baselines(&b.run, &b.windows, cli.seed)?, &prov)?),
        }
    }
    Ok(json!({ "out": path_str(dir), "files": files }))
}

#[derive(Debug, Clone, Serialize)]
struct LevelRow {
    level: u32,
    seeds: u64,
    mean_ate: f64,
    mean_rpe_trans: f64,
    mean_rpe_rot_deg: f64,
}

impl CsvRecord for LevelRow {
    fn header() -> &'static str {
        "level,seeds,mean_ate,mean_rpe_trans,mean_rpe_rot_deg"
    }
    fn fields(&self) -> String {
        format!("{},{},{},{},{}", self.level, self.seeds, self.mean_ate, self.mean_rpe_trans, self.mean_rpe_rot_deg)
    }
}

fn qoe_cmd(cli: &Cli, a: &QoeArgs) -> Result<Value> {
    match (&a.gt, &a.est) {
        (Some(gt), Some(est)) => {
            let r = qoe::evaluate(&qoe::read_tum(gt)?, &qoe::read_tum(est)?, a.max_dt, a.delta, a.smooth)?;
            let prov = Provenance::new("qoe", cli.seed, json!({ "gt": path_str(gt), "est": path_str(est), "delta": a.delta, "smooth": a.smooth, "max_dt": a.max_dt }));
            write_json(&cli.out, &r, &prov)?;
            Ok(json!({ "out": path_str(&cli.out), "pairs": r.pairs, "ate_rmse": r.ate_rmse, "rpe_trans_rmse": r.rpe.trans_rmse, "rpe_rot_rmse_deg": r.rpe.rot_rmse_deg }))
        }
        (None, None) => qoe_study(cli, a),
        _ => Err(CliError::Usage("give both --gt and --est, or neither for the spoofing study".into())),
    }
}

/// Mean ATE and RPE per spoofing level over synthetic trajectories.
fn qoe_study(cli: &Cli, a: &QoeArgs) -> Result<Value> {
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for level in SPOOF_LEVELS {
        let (mut ate, mut rt, mut rr) = (0.0, 0.0, 0.0);
        for k in 0..a.seeds {
            let seed = cli.seed.wrapping_add(k);
            let gt = qoe::synthetic_trajectory(a.poses, seed);
            let cfg = SpoofConfig { level, noise_sigma_t: a.sigma_t, noise_sigma_r_deg: a.sigma_r, seed };
            let est = qoe::spoof(&gt, &cfg)?;
            let r = qoe::evaluate(&gt, &est, a.max_dt, a.delta, a.smooth)?;
            ate += r.ate_rmse;
            rt += r.rpe.trans_rmse;
            rr += r.rpe.rot_rmse_deg;
            if k == 0 {
                series.extend(r.rot_errors_smoothed.iter().enumerate().map(|(i, y)| PlotPoint { series: format!("spoof_{level}"), x: i as f64, y: *y }));
            }
        }
        let n = a.seeds.max(1) as f64;
        rows.push(LevelRow { level, seeds: a.seeds, mean_ate: ate / n, mean_rpe_trans: rt / n, mean_rpe_rot_deg: rr / n });
    }
    let prov = Provenance::new("qoe", cli.seed, json!({ "poses": a.poses, "seeds": a.seeds, "sigma_t": a.sigma_t, "sigma_r_deg": a.sigma_r, "delta": a.delta, "smooth": a.smooth }))
        .with_note("synthetic trajectories; rpe_rotation.csv holds the smoothed per-interval rotation error of the first seed");
    let mut files = written(&cli.out, "qoe_levels", &rows, &prov)?;
    files.extend(written(&cli.out, "rpe_rotation", &series, &prov)?);
    Ok(json!({ "out": path_str(&cli.out), "files": files, "levels": rows }))
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<Value> {
    let b = base(cli.seed, &a.pipeline)?;
    let test = select(&b.windows, &b.run.split.test);
    let rows = bench_latency(&b.run, &test, a.samples)?;
    let prov = provenance("bench-latency", cli, &b, &a.pipeline)?.with_note("wall-clock timings depend on the host");
    let files = written(&cli.out, "latency", &rows, &prov)?;
    Ok(json!({ "out": path_str(&cli.out), "files": files, "latency": rows }))
}

fn explain_cmd(cli: &Cli, a: &ExplainArgs) -> Result<Value> {
    let b = base(cli.seed, &a.pipeline)?;
    let s = explain(&b.run, &b.windows, a.head, a.queries, a.background)?;
    let prov = provenance("explain", cli, &b, &a.pipeline)?;
    let mut files = written(&cli.out, "explain", &s.rows(), &prov)?;
    files.extend(written(&cli.out, "latent_pca", &s.plot_points(), &prov)?);
    Ok(json!({
        "out": path_str(&cli.out),
        "files": files,
        "mean_abs_attribution": s.rows(),
        "max_efficiency_gap": s.max_efficiency_gap,
        "pca_explained": s.pca_explained,
    }))
}
