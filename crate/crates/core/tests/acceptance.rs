//! Acceptance suite. Every criterion runs, prints one PASS/FAIL line, and
//! the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use misreport_core::classifiers::{HeadKind, MlpConfig, MlpHead};
use misreport_core::detectors::{MahalanobisFit, Standardizer, TransformerAe, TransformerAeConfig};
use misreport_core::detectors::mahalanobis::DEFAULT_SHRINKAGE;
use misreport_core::eval::artifact::to_csv;
use misreport_core::eval::explain::shapley3;
use misreport_core::eval::latency::{FUSED_EXCLUDING_TRANSFORMER, FUSED_INCLUDING_TRANSFORMER};
use misreport_core::eval::split::select;
use misreport_core::eval::{bench_latency, run_pipeline, window_grid, windows_of, PipelineRun, Scenario};
use misreport_core::eval::pipeline::THRESHOLD_PERCENTILES;
use misreport_core::features::{features_to_csv, Label, WindowSample, SEQ_CHANNELS};
use misreport_core::metrics::roc_auc;
use misreport_core::nn::{grad_check, Dense, LayerNorm, Module, MultiHeadAttention, Tensor2};
use misreport_core::qoe::{self, SpoofConfig, SPOOF_LEVELS};
use misreport_core::simcore::{compute_phi, run_session, AttackConfig, TelemetryLog, TrafficConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed < limit {
        Ok(format!("{detail}; {:.2?} < {limit:?}", elapsed))
    } else {
        Err(format!("{detail}; took {:.2?}, limit {limit:?}", elapsed))
    }
}

fn ac1_phi() -> Outcome {
    let t = Instant::now();
    let rows = [(0.01, 0.48, 0.31), (0.01, 0.29, 0.06), (0.10, 0.48, 0.48), (0.10, 0.29, 0.09)];
    let mut bad = Vec::new();
    let mut got = Vec::new();
    for (rho, tau, want) in rows {
        let phi = compute_phi(4, rho, tau).map_err(|e| e.to_string())?;
        got.push(format!("{phi:.3}"));
        if (phi - want).abs() > 0.015 {
            bad.push(format!("rho={rho} tau={tau}: {phi:.4} vs {want}"));
        }
    }
    let high = compute_phi(4, 0.01, 0.60).map_err(|e| e.to_string())?;
    if !(0.47..=0.50).contains(&high) {
        bad.push(format!("tau=0.60: {high:.4} outside [0.47, 0.50]"));
    }
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    within(t.elapsed(), Duration::from_secs(1), format!("phi = [{}], tau=0.60 gives {high:.3}", got.join(", ")))
}

const SESSION_EPOCHS: usize = 5000;

fn attacked_session() -> &'static TelemetryLog {
    static LOG: OnceLock<TelemetryLog> = OnceLock::new();
    LOG.get_or_init(|| {
        let attack = AttackConfig::new(4, 0.48, 0.01, SESSION_EPOCHS as u64).expect("valid attack");
        run_session(attack, TrafficConfig::default(), SESSION_EPOCHS, 11).expect("session runs")
    })
}

fn ac2_attraction() -> Outcome {
    let t = Instant::now();
    let log = attacked_session();
    let share = log.selection_shares(|r| r.attack_active)[0];
    let honest = run_session(AttackConfig::honest(4).map_err(|e| e.to_string())?, TrafficConfig::default(), SESSION_EPOCHS, 12)
        .map_err(|e| e.to_string())?;
    let shares = honest.selection_shares(|_| true);
    let elapsed = t.elapsed();
    let ok = (share - 0.48).abs() <= 0.07 && shares.iter().all(|s| (s - 0.25).abs() <= 0.05);
    let detail = format!("compromised share {share:.3} (target 0.48 +/- 0.07); honest shares {shares:.3?}");
    if !ok {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(30), detail)
}

/// Independent quantile: the `ceil(rho * n)`-th smallest value.
fn rho_quantile(history: &[u64], rho: f64) -> u64 {
    let mut sorted = history.to_vec();
    sorted.sort_unstable();
    let k = ((rho * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn ac3_stealth() -> Outcome {
    let log = attacked_session();
    let c = log.attack.compromised_switch;
    let rho = log.attack.stealth_percentile;
    let mut history = Vec::new();
    let (mut lies, mut violations) = (0, 0);
    for r in &log.records {
        if r.misreported[c] {
            lies += 1;
            if history.is_empty() || r.reported_load[c] > rho_quantile(&history, rho) {
                violations += 1;
            }
        }
        history.push(r.actual_load[c]);
    }
    check(lies > 0 && violations == 0, format!("{lies} misreported epochs, {violations} above the rho-quantile of history"))
}

struct Base {
    scenario: Scenario,
    logs: Vec<TelemetryLog>,
    windows: Vec<WindowSample>,
    run: PipelineRun,
    elapsed: Duration,
}

fn base() -> &'static Base {
    static BASE: OnceLock<Base> = OnceLock::new();
    BASE.get_or_init(|| {
        let t = Instant::now();
        let scenario = Scenario::base(0);
        let logs = scenario.simulate().expect("base sessions simulate");
        let windows = windows_of(&logs, &scenario.window).expect("windows");
        let run = run_pipeline(&scenario, &windows).expect("pipeline runs");
        Base { scenario, logs, windows, run, elapsed: t.elapsed() }
    })
}

fn ac4_threshold_pattern() -> Outcome {
    let b = base();
    let f1: Vec<f64> = b.run.thresholds.iter().map(|t| t.report.f1_fake).collect();
    let pct: Vec<f64> = b.run.thresholds.iter().map(|t| t.percentile).collect();
    if pct != THRESHOLD_PERCENTILES {
        return Err(format!("unexpected percentiles {pct:?}"));
    }
    let rises: Vec<f64> = f1.windows(2).map(|p| p[1] - p[0]).filter(|d| *d > 0.0).collect();
    let ordered = rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.02);
    let ok = b.windows.len() >= 5000 && f1[0] > f1[4] && ordered;
    check(ok, format!("{} windows; FAKE-F1 at p90..p98 = {f1:.4?}", b.windows.len()))
}

fn ac5_hybrid_gain() -> Outcome {
    let b = base();
    let best = b.run.best_threshold_f1();
    let mut parts = vec![format!("best threshold FAKE-F1 {best:.3}")];
    let mut ok = b.elapsed < Duration::from_secs(600);
    for kind in [HeadKind::Mlp, HeadKind::Gbt] {
        let r = b.run.head_report(kind, "fused").ok_or("missing fused report")?;
        let auc = r.auc.unwrap_or(f64::NAN);
        ok &= r.f1_fake >= best + 0.05 && r.f1_fake >= 0.80 && auc >= 0.95;
        parts.push(format!("{kind} FAKE-F1 {:.3} AUC {auc:.3}", r.f1_fake));
    }
    parts.push(format!("pipeline {:.1?} (limit 10 min)", b.elapsed));
    check(ok, parts.join("; "))
}

fn ac6_ablation() -> Outcome {
    let b = base();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [HeadKind::Mlp, HeadKind::Gbt] {
        let get = |inputs: &str| b.run.head_report(kind, inputs).ok_or_else(|| format!("missing {kind} {inputs} report"));
        let (fused, recon, stat, mahal) = (get("fused")?, get("recon")?, get("stat")?, get("mahal")?);
        let stat_auc = stat.auc.unwrap_or(f64::NAN);
        let single = recon.f1_fake.max(stat.f1_fake).max(mahal.f1_fake);
        ok &= recon.f1_fake > mahal.f1_fake
            && mahal.f1_fake > stat.f1_fake
            && stat.f1_fake <= 0.2
            && stat_auc >= 0.55
            && fused.f1_fake >= single - 0.02;
        parts.push(format!(
            "{kind}: recon {:.3} mahal {:.3} stat {:.3} (AUC {stat_auc:.3}) fused {:.3}",
            recon.f1_fake, mahal.f1_fake, stat.f1_fake, fused.f1_fake
        ));
    }
    check(ok, parts.join("; "))
}

fn ac7_window_pattern() -> Outcome {
    let b = base();
    let rows = window_grid(&b.scenario, &b.logs, &[(20, 10), (5, 5)]).map_err(|e| e.to_string())?;
    let (long, short) = (&rows[0], &rows[1]);
    let ok = long.f1_fake_mlp >= short.f1_fake_mlp && long.f1_fake_gbt >= short.f1_fake_gbt;
    check(
        ok,
        format!(
            "(20,10) MLP {:.3} GBT {:.3}; (5,5) MLP {:.3} GBT {:.3}",
            long.f1_fake_mlp, long.f1_fake_gbt, short.f1_fake_mlp, short.f1_fake_gbt
        ),
    )
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Loss `sum(y * r)` for a fixed random `r`, so the upstream gradient is `r`.
fn probe_loss(y: &Tensor2, r: &Tensor2) -> f64 {
    y.hadamard(r).sum()
}

fn ac8_gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let eps = 1e-5;
    let mut errs = Vec::new();

    let x = random_tensor(5, 6, &mut rng);
    let dense = Dense::new(6, 4, &mut rng);
    let r = random_tensor(5, 4, &mut rng);
    let mut g = dense.zeroed();
    dense.backward(&x, &r, &mut g);
    errs.push(("dense", grad_check(&dense, &g, |m| probe_loss(&m.forward(&x), &r), eps, usize::MAX, &mut rng)));

    let mut ln = LayerNorm::new(6);
    ln.gamma = random_tensor(1, 6, &mut rng);
    ln.beta = random_tensor(1, 6, &mut rng);
    let r = random_tensor(5, 6, &mut rng);
    let (_, cache) = ln.forward(&x);
    let mut g = ln.zeroed();
    ln.backward(&cache, &r, &mut g);
    errs.push(("layernorm", grad_check(&ln, &g, |m| probe_loss(&m.forward(&x).0, &r), eps, usize::MAX, &mut rng)));

    let attn = MultiHeadAttention::new(6, 2, &mut rng).map_err(|e| e.to_string())?;
    let (_, cache) = attn.forward(&x);
    let mut g = attn.zeroed();
    attn.backward(&cache, &r, &mut g);
    errs.push(("attention", grad_check(&attn, &g, |m| probe_loss(&m.forward(&x).0, &r), eps, usize::MAX, &mut rng)));

    let cfg = TransformerAeConfig { d_model: 8, heads: 2, ff_width: 16, latent_dim: 4, ..Default::default() };
    let seqs: Vec<Vec<[f64; SEQ_CHANNELS]>> = (0..4)
        .map(|_| (0..6).map(|_| [0; SEQ_CHANNELS].map(|_| rng.random_range(-2.0..2.0))).collect())
        .collect();
    let rows: Vec<[f64; SEQ_CHANNELS]> = seqs.iter().flatten().copied().collect();
    let tae = TransformerAe::new(cfg, Standardizer::fit(&rows).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let xs = tae.prepare(&seqs[0]);
    let mut g = tae.zeroed();
    tae.loss_and_grad(&xs, &mut g);
    errs.push(("transformer_ae", grad_check(&tae, &g, |m| m.loss(&xs), eps, usize::MAX, &mut rng)));

    let mlp = MlpHead::new(MlpConfig::default());
    let xm = random_tensor(6, 3, &mut rng);
    let (y, w) = ([1.0, 0.0, 1.0, 0.0, 0.0, 1.0], [1.0, 0.5, 2.0, 1.0, 1.5, 0.7]);
    let mut g = mlp.zeroed();
    mlp.loss_and_grad(&xm, &y, &w, &mut g);
    errs.push(("mlp_head", grad_check(&mlp, &g, |m| m.loss(&xm, &y, &w), eps, usize::MAX, &mut rng)));

    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    if errs.iter().any(|(_, e)| !(*e < 1e-4)) {
        return Err(format!("max relative error: {detail}"));
    }
    within(t.elapsed(), Duration::from_secs(60), format!("max relative error: {detail}"))
}

fn ac9_mahalanobis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Vec<f64>> = (0..10_000).map(|_| (0..16).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let fit = MahalanobisFit::fit(&rows, DEFAULT_SHRINKAGE).map_err(|e| e.to_string())?;
    let mean = rows.iter().map(|r| fit.squared_distance(r)).sum::<f64>() / rows.len() as f64;
    check((14.4..=17.6).contains(&mean), format!("mean squared distance {mean:.3} (d = 16)"))
}

fn ac10_qoe() -> Outcome {
    let gt = qoe::synthetic_trajectory(500, 10);
    let same = qoe::evaluate(&gt, &gt, 0.02, 1, 10).map_err(|e| e.to_string())?;
    let (axis, angle) = ([0.3f64, -1.0, 0.4], 1.1f64);
    let n = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (s, c) = (0.5 * angle).sin_cos();
    let q = [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n];
    let moved = gt.transformed(&q, &[2.0, -3.0, 0.5]);
    let rigid = qoe::evaluate(&gt, &moved, 0.02, 1, 10).map_err(|e| e.to_string())?;
    let mut means = Vec::new();
    for level in SPOOF_LEVELS {
        let mut total = 0.0;
        for seed in 0..10 {
            let gt = qoe::synthetic_trajectory(1000, seed);
            let cfg = SpoofConfig { level, noise_sigma_t: 0.05, noise_sigma_r_deg: 2.0, seed };
            let est = qoe::spoof(&gt, &cfg).map_err(|e| e.to_string())?;
            total += qoe::evaluate(&gt, &est, 0.02, 1, 10).map_err(|e| e.to_string())?.ate_rmse;
        }
        means.push(total / 10.0);
    }
    let ok = same.ate_rmse < 1e-9
        && same.rpe.trans_rmse < 1e-9
        && same.rpe.rot_rmse_deg < 1e-9
        && rigid.ate_rmse < 1e-9
        && means[1..].iter().all(|m| *m > means[0]);
    check(
        ok,
        format!(
            "identical ATE {:.1e} RPE {:.1e}/{:.1e}; rigid ATE {:.1e}; mean ATE by level {means:.4?}",
            same.ate_rmse, same.rpe.trans_rmse, same.rpe.rot_rmse_deg, rigid.ate_rmse
        ),
    )
}

/// Probability that a random positive outscores a random negative, ties half.
fn pairwise_auc(labels: &[Label], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if li.is_fake() && !lj.is_fake() {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                };
            }
        }
    }
    wins / pairs
}

fn ac11_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut auc_gap: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(10..80);
        let mut labels: Vec<Label> = (0..n).map(|_| Label::from_fake(rng.random_bool(0.4))).collect();
        labels[0] = Label::Fake;
        labels[1] = Label::Real;
        // Coarse scores so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..1.0f64) * 10.0).round() / 10.0).collect();
        let got = roc_auc(&labels, &scores).map_err(|e| e.to_string())?;
        auc_gap = auc_gap.max((got - pairwise_auc(&labels, &scores)).abs());
    }
    let head = MlpHead::new(MlpConfig { seed: 3, ..Default::default() });
    let f = |x: &[f64; 3]| head.predict_proba(x) + (x[0] * x[1]).sin() * x[2];
    let mut eff_gap: f64 = 0.0;
    for _ in 0..100 {
        let x = [0; 3].map(|_| rng.random_range(-3.0..3.0));
        let bg: Vec<[f64; 3]> = (0..20).map(|_| [0; 3].map(|_| rng.random_range(-3.0..3.0))).collect();
        let a = shapley3(f, &x, &bg).map_err(|e| e.to_string())?;
        let base = bg.iter().map(f).sum::<f64>() / bg.len() as f64;
        eff_gap = eff_gap.max((a.values.iter().sum::<f64>() - (f(&x) - base)).abs());
    }
    check(auc_gap < 1e-9 && eff_gap < 1e-9, format!("max AUC gap {auc_gap:.1e}; max efficiency gap {eff_gap:.1e}"))
}

/// Telemetry, features and metric tables of one reduced pipeline run.
fn reduced_run() -> Result<Vec<String>, String> {
    let mut sc = Scenario::base(42);
    sc.num_epochs = 600;
    for s in &mut sc.sessions {
        s.attack_window = sc.num_epochs as u64 - s.attack_start;
    }
    sc.transformer.epochs = 3;
    let logs = sc.simulate().map_err(|e| e.to_string())?;
    let windows = windows_of(&logs, &sc.window).map_err(|e| e.to_string())?;
    let run = run_pipeline(&sc, &windows).map_err(|e| e.to_string())?;
    let mut out: Vec<String> = logs.iter().map(TelemetryLog::to_csv).collect();
    out.push(features_to_csv(&windows));
    out.push(to_csv(&run.thresholds));
    out.push(to_csv(&run.head_results));
    Ok(out)
}

fn ac12_determinism() -> Outcome {
    let (a, b) = (reduced_run()?, reduced_run()?);
    let differing = a.iter().zip(&b).filter(|(x, y)| x.as_bytes() != y.as_bytes()).count();
    check(
        a.len() == b.len() && differing == 0,
        format!("{} artefacts compared, {differing} differ, {} bytes total", a.len(), a.iter().map(String::len).sum::<usize>()),
    )
}

fn ac13_latency() -> Outcome {
    let b = base();
    let test = select(&b.windows, &b.run.split.test);
    let rows = bench_latency(&b.run, &test, 1000).map_err(|e| e.to_string())?;
    let median = |m: &str| rows.iter().find(|r| r.module == m).map(|r| r.median_s).ok_or(format!("missing {m}"));
    let (excl, incl) = (median(FUSED_EXCLUDING_TRANSFORMER)?, median(FUSED_INCLUDING_TRANSFORMER)?);
    check(excl < 5e-3 && incl < 2.0, format!("median fused scoring {:.1} us without transformer, {:.3} ms with", excl * 1e6, incl * 1e3))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("AC1 misreport frequency", ac1_phi),
        ("AC2 attack attraction", ac2_attraction),
        ("AC3 stealth bound", ac3_stealth),
        ("AC4 threshold detector ordering", ac4_threshold_pattern),
        ("AC5 hybrid gain", ac5_hybrid_gain),
        ("AC6 ablation ordering", ac6_ablation),
        ("AC7 window/stride ordering", ac7_window_pattern),
        ("AC8 gradient correctness", ac8_gradients),
        ("AC9 Mahalanobis chi-square mean", ac9_mahalanobis),
        ("AC10 trajectory QoE", ac10_qoe),
        ("AC11 AUC and Shapley oracles", ac11_oracles),
        ("AC12 determinism", ac12_determinism),
        ("AC13 latency budget", ac13_latency),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 13 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
