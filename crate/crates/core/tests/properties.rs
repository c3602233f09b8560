use misreport_core::detectors::MahalanobisFit;
use misreport_core::features::stats::{autocorr_lag1, excess_kurtosis, mad, mean, skewness, std_dev, zscore_last};
use misreport_core::features::{make_windows, peer_features, WindowConfig, NUM_FEATURES};
use misreport_core::metrics::roc_auc;
use misreport_core::features::Label;
use misreport_core::nn::layers::softmax_rows;
use misreport_core::nn::{LayerNorm, Tensor2};
use misreport_core::qoe;
use misreport_core::simcore::{compute_phi, run_session, sample_fake_load, AttackConfig, TrafficConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Loads with enough spread that no statistic hits its zero-variance rule.
fn spread_series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1e4f64, 6..30).prop_filter("needs spread", |v| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64 > 1.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    /// Idealized selection: peers draw i.i.d. uniform loads, the attacker
    /// lies with probability phi at exactly its rho-quantile and otherwise
    /// behaves like a peer. Its share must match tau within binomial noise.
    #[test]
    fn phi_round_trip(s in 2usize..7, rho in 0.01..0.2f64, frac in 0.05..0.95f64, seed in any::<u64>()) {
        let lo = 1.0 / s as f64;
        let hi = lo + ((1.0 - rho).powi(s as i32 - 1) - lo);
        let tau = lo + frac * (hi - lo);
        let phi = compute_phi(s, rho, tau).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20_000;
        let mut wins = 0;
        for _ in 0..n {
            let own = if rng.random_bool(phi) { rho } else { rng.random::<f64>() };
            if (1..s).all(|_| rng.random::<f64>() > own) {
                wins += 1;
            }
        }
        let share = wins as f64 / n as f64;
        let sd = (tau * (1.0 - tau) / n as f64).sqrt();
        prop_assert!((share - tau).abs() < 4.5 * sd, "share {share} tau {tau} phi {phi}");
    }

    #[test]
    fn fake_loads_come_from_the_low_quantile(history in prop::collection::vec(0u64..1_000_000, 1..300), rho in 0.01..0.5f64, seed in any::<u64>()) {
        let v = sample_fake_load(&history, rho, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut sorted = history.clone();
        sorted.sort_unstable();
        let k = ((rho * sorted.len() as f64).ceil() as usize).max(1) - 1;
        prop_assert!(history.contains(&v));
        prop_assert!(v <= sorted[k]);
    }

    #[test]
    fn session_log_invariants(seed in any::<u64>(), start in 0u64..300, window in 1u64..400, compromised in 0usize..4) {
        let attack = AttackConfig::new(4, 0.48, 0.05, window).unwrap().with_start(start).with_compromised(compromised).unwrap();
        let log = run_session(attack.clone(), TrafficConfig::default(), 400, seed).unwrap();
        for (i, r) in log.records.iter().enumerate() {
            prop_assert_eq!(r.epoch_index, i as u64);
            for s in 0..4 {
                if !r.misreported[s] {
                    prop_assert_eq!(r.reported_load[s], r.actual_load[s]);
                } else {
                    prop_assert_eq!(s, compromised);
                    prop_assert!(attack.in_window(r.epoch_index));
                }
            }
        }
        let again = run_session(attack, TrafficConfig::default(), 400, seed).unwrap();
        prop_assert_eq!(log.to_csv(), again.to_csv());
    }

    #[test]
    fn windows_follow_count_and_label_rules(seed in any::<u64>(), w in 3usize..15, stride_frac in 0.0..1.0f64) {
        let stride = 1 + (stride_frac * (w - 1) as f64) as usize;
        let attack = AttackConfig::new(4, 0.48, 0.01, 400).unwrap().with_start(100);
        let log = run_session(attack, TrafficConfig::default(), 300, seed).unwrap();
        let windows = make_windows(&log, &WindowConfig::new(w, stride)).unwrap();
        let per_switch = (300 - w) / stride + 1;
        prop_assert_eq!(windows.len(), 4 * per_switch);
        for win in &windows {
            prop_assert_eq!(win.features.as_slice().len(), NUM_FEATURES);
            prop_assert!(win.features.as_slice().iter().all(|v| v.is_finite()));
            prop_assert_eq!(win.start_epoch as usize % stride, 0);
            let s = win.start_epoch as usize;
            let fake = log.records[s..s + w].iter().any(|r| r.misreported[win.switch_id]);
            prop_assert_eq!(win.label.is_fake(), fake);
        }
    }

    #[test]
    fn standardized_statistics_ignore_shifts(xs in spread_series(), c in -1e4..1e4f64) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        for f in [zscore_last, skewness, excess_kurtosis, autocorr_lag1] {
            prop_assert!(close(f(&xs).unwrap(), f(&shifted).unwrap(), 1e-9));
        }
        prop_assert!(close(mean(&shifted), mean(&xs) + c, 1e-9));
    }

    #[test]
    fn spread_statistics_scale_with_loads(xs in spread_series(), k in 0.01..100.0f64) {
        let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
        prop_assert!(close(std_dev(&scaled).unwrap(), k * std_dev(&xs).unwrap(), 1e-9));
        prop_assert!(close(mad(&scaled).unwrap(), k * mad(&xs).unwrap(), 1e-9));
        for f in [zscore_last, skewness, excess_kurtosis] {
            prop_assert!(close(f(&xs).unwrap(), f(&scaled).unwrap(), 1e-9));
        }
    }

    #[test]
    fn load_ratio_is_scale_free(means in prop::collection::vec(1.0..1e5f64, 2..6), deltas in prop::collection::vec(-1e3..1e3f64, 6), k in 0.01..100.0f64) {
        let d = &deltas[..means.len()];
        let (r, _) = peer_features(0, &means, d).unwrap();
        let scaled: Vec<f64> = means.iter().map(|m| m * k).collect();
        let (rs, _) = peer_features(0, &scaled, d).unwrap();
        prop_assert!(close(r, rs, 1e-9));
    }

    #[test]
    fn softmax_and_layernorm_normalize_rows(rows in 1usize..6, cols in 2usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-20.0..20.0));
        let p = softmax_rows(&x);
        let ln = LayerNorm { eps: 0.0, ..LayerNorm::new(cols) };
        let (y, _) = ln.forward(&x);
        for i in 0..rows {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let m = y.row(i).iter().sum::<f64>() / cols as f64;
            let v = y.row(i).iter().map(|a| (a - m).powi(2)).sum::<f64>() / cols as f64;
            prop_assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mahalanobis_ignores_rotations(seed in any::<u64>(), angle in 0.0..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..400).map(|_| {
            let a: f64 = rng.random_range(-1.0..1.0);
            [3.0 * a + rng.random_range(-1.0..1.0), a - 2.0]
        }).collect();
        let (s, c) = angle.sin_cos();
        let rot = |p: &[f64; 2]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        let turned: Vec<[f64; 2]> = rows.iter().map(rot).collect();
        let (a, b) = (MahalanobisFit::fit(&rows, 1e-3).unwrap(), MahalanobisFit::fit(&turned, 1e-3).unwrap());
        let q = [1.5, -0.5];
        prop_assert!((a.distance(&q) - b.distance(&rot(&q))).abs() < 1e-3);
        prop_assert!(a.distance(&q) >= 0.0);
    }

    #[test]
    fn monotone_maps_preserve_auc(seed in any::<u64>(), a in 0.1..5.0f64, b in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<Label> = (0..60).map(|_| Label::from_fake(rng.random_bool(0.3))).collect();
        labels[0] = Label::Fake;
        labels[1] = Label::Real;
        let raw: Vec<f64> = (0..60).map(|_| rng.random_range(-4.0..4.0)).collect();
        let calibrated: Vec<f64> = raw.iter().map(|z| 1.0 / (1.0 + (-(a * z + b)).exp())).collect();
        prop_assert!((roc_auc(&labels, &raw).unwrap() - roc_auc(&labels, &calibrated).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trajectory_errors_ignore_one_global_rigid_map(seed in 0u64..1000, ax in -1.0..1.0f64, ay in -1.0..1.0f64, angle in 0.0..3.1f64, t in prop::array::uniform3(-5.0..5.0f64)) {
        let gt = qoe::synthetic_trajectory(120, seed);
        let est = qoe::spoof(&gt, &qoe::SpoofConfig::new(50, seed).unwrap()).unwrap();
        let axis = [ax, ay, 1.0];
        let n = (ax * ax + ay * ay + 1.0).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        let q = [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n];
        let base = qoe::evaluate(&gt, &est, 0.02, 1, 5).unwrap();
        let moved = qoe::evaluate(&gt, &est.transformed(&q, &t), 0.02, 1, 5).unwrap();
        prop_assert!((base.ate_rmse - moved.ate_rmse).abs() < 1e-9);
        prop_assert!((base.rpe.trans_rmse - moved.rpe.trans_rmse).abs() < 1e-9);
        prop_assert!((base.rpe.rot_rmse_deg - moved.rpe.rot_rmse_deg).abs() < 1e-9);
        prop_assert!(moved.rpe.rot_errors_deg.iter().all(|a| (0.0..=180.0).contains(a)));
    }
}
