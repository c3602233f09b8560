use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, SimError};

/// Per-epoch misreport probability needed for a compromised switch to win a
/// `tau` share of selections among `num_switches`, when each fake report is
/// drawn from the bottom `rho` quantile of its history.
///
/// The honest switch wins `1/S` of epochs; a fake report undercuts each of the
/// `S-1` peers independently with probability `1-rho`, so the target share is
/// `tau = (1-phi)/S + phi * (1-rho)^(S-1)`.
pub fn compute_phi(num_switches: usize, rho: f64, tau: f64) -> Result<f64> {
    if num_switches < 2 {
        return Err(SimError::InvalidAttack(format!(
            "need at least 2 switches, got {num_switches}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SimError::InvalidAttack(format!(
            "stealth percentile must lie in (0, 1), got {rho}"
        )));
    }
    let uniform = 1.0 / num_switches as f64;
    if !(tau <= 1.0) || tau < uniform - 1e-12 {
        return Err(SimError::InvalidAttack(format!(
            "target share must lie in [1/S, 1] = [{uniform}, 1], got {tau}"
        )));
    }
    let denom = (1.0 - rho).powi(num_switches as i32 - 1) - uniform;
    if denom.abs() < 1e-12 {
        return Err(SimError::DegenerateDenominator(denom));
    }
    // tau within rounding of 1/S counts as "no attack".
    let numer = (tau - uniform).max(0.0);
    let phi = numer / denom;
    if !(0.0..=1.0).contains(&phi) {
        return Err(SimError::OutOfRange(phi));
    }
    Ok(phi)
}

/// Index of the empirical `rho` quantile in an ascending history of length
/// `len`: `ceil(rho * len) - 1`, clamped into `[0, len-1]`.
fn quantile_index(len: usize, rho: f64) -> usize {
    let raw = (rho * len as f64).ceil() as isize - 1;
    raw.clamp(0, len as isize - 1) as usize
}

/// Empirical `rho` quantile of `sorted` (ascending).
pub fn stealth_quantile(sorted: &[u64], rho: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    Some(sorted[quantile_index(sorted.len(), rho)])
}

/// Draws uniformly from the multiset of historical loads that do not exceed
/// the empirical `rho` quantile of `history`.
pub fn sample_fake_load<R: Rng + ?Sized>(history: &[u64], rho: f64, rng: &mut R) -> Result<u64> {
    if history.is_empty() {
        return Err(SimError::EmptyHistory);
    }
    let mut sorted = history.to_vec();
    sorted.sort_unstable();
    Ok(sample_from_sorted(&sorted, rho, rng))
}

pub(crate) fn sample_from_sorted<R: Rng + ?Sized>(sorted: &[u64], rho: f64, rng: &mut R) -> u64 {
    debug_assert!(!sorted.is_empty());
    let q = sorted[quantile_index(sorted.len(), rho)];
    // Ties at the quantile value all belong to the pool.
    let pool = sorted.partition_point(|&v| v <= q);
    sorted[rng.random_range(0..pool)]
}

/// Adversary parameters. `misreport_freq` is derived from the others unless
/// explicitly overridden with [`AttackConfig::with_misreport_freq`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub num_switches: usize,
    pub target_share: f64,
    pub stealth_percentile: f64,
    /// Number of epochs the attack persists once started.
    pub attack_window: u64,
    /// First epoch of the attack window.
    pub attack_start: u64,
    pub compromised_switch: usize,
    /// Minimum number of history entries before the first misreport.
    pub warmup_history: usize,
    /// Rolling history buffer size; `None` keeps everything since epoch 0.
    pub history_capacity: Option<usize>,
    misreport_freq: f64,
}

impl AttackConfig {
    pub const DEFAULT_WARMUP: usize = 100;

    pub fn new(num_switches: usize, target_share: f64, stealth_percentile: f64, attack_window: u64) -> Result<Self> {
        let phi = compute_phi(num_switches, stealth_percentile, target_share)?;
        Ok(Self {
            num_switches,
            target_share,
            stealth_percentile,
            attack_window,
            attack_start: 0,
            compromised_switch: 0,
            warmup_history: Self::DEFAULT_WARMUP,
            history_capacity: None,
            misreport_freq: phi,
        })
    }

    /// No adversary: `tau = 1/S`, hence `phi = 0`.
    pub fn honest(num_switches: usize) -> Result<Self> {
        Self::new(num_switches, 1.0 / num_switches as f64, 0.01, 0)
    }

    pub fn misreport_freq(&self) -> f64 {
        self.misreport_freq
    }

    /// Manually tuned frequency replacing the derived one.
    pub fn with_misreport_freq(mut self, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&phi) {
            return Err(SimError::OutOfRange(phi));
        }
        self.misreport_freq = phi;
        Ok(self)
    }

    pub fn with_start(mut self, attack_start: u64) -> Self {
        self.attack_start = attack_start;
        self
    }

    pub fn with_compromised(mut self, switch: usize) -> Result<Self> {
        if switch >= self.num_switches {
            return Err(SimError::InvalidAttack(format!(
                "compromised switch {switch} out of range for {} switches",
                self.num_switches
            )));
        }
        self.compromised_switch = switch;
        Ok(self)
    }

    pub fn with_warmup(mut self, warmup_history: usize) -> Self {
        self.warmup_history = warmup_history;
        self
    }

    pub fn with_history_capacity(mut self, capacity: Option<usize>) -> Self {
        self.history_capacity = capacity;
        self
    }

    /// Whether `epoch` falls inside the configured attack window.
    pub fn in_window(&self, epoch: u64) -> bool {
        epoch >= self.attack_start && epoch - self.attack_start < self.attack_window
    }

    /// Re-checks invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.num_switches < 2 {
            return Err(SimError::InvalidAttack("need at least 2 switches".into()));
        }
        if self.compromised_switch >= self.num_switches {
            return Err(SimError::InvalidAttack("compromised switch out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.misreport_freq) {
            return Err(SimError::OutOfRange(self.misreport_freq));
        }
        if !(self.stealth_percentile > 0.0 && self.stealth_percentile < 1.0) {
            return Err(SimError::InvalidAttack("stealth percentile must lie in (0, 1)".into()));
        }
        if let Some(0) = self.history_capacity {
            return Err(SimError::InvalidAttack("history capacity must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phi_table_rows() {
        let cases = [(0.01, 0.29, 0.06), (0.10, 0.48, 0.48)];
        for (rho, tau, want) in cases {
            let phi = compute_phi(4, rho, tau).unwrap();
            assert!((phi - want).abs() <= 0.01, "rho={rho} tau={tau}: {phi}");
        }
        let phi = compute_phi(4, 0.01, 0.60).unwrap();
        assert!((phi - 0.486).abs() < 0.001, "{phi}");
        assert_eq!(compute_phi(4, 0.01, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn phi_rejects_bad_inputs() {
        assert!(matches!(compute_phi(1, 0.1, 0.5), Err(SimError::InvalidAttack(_))));
        assert!(matches!(compute_phi(4, 0.0, 0.5), Err(SimError::InvalidAttack(_))));
        assert!(matches!(compute_phi(4, 0.1, 0.2), Err(SimError::InvalidAttack(_))));
        // Large rho makes (1-rho)^(S-1) < 1/S and phi negative.
        assert!(matches!(compute_phi(4, 0.5, 0.6), Err(SimError::OutOfRange(_))));
        // tau above what perfect lying can reach.
        assert!(matches!(compute_phi(4, 0.1, 0.95), Err(SimError::OutOfRange(_))));
        // (1-rho)^1 == 1/2 exactly.
        assert!(matches!(compute_phi(2, 0.5, 0.7), Err(SimError::DegenerateDenominator(_))));
    }

    #[test]
    fn fake_load_pool_matches_quantile_oracle() {
        let history: Vec<u64> = (1..=100).map(|i| i * 10).collect();
        // Oracle: sorted history, index ceil(0.1*100)-1 = 9 -> value 100.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            let v = sample_fake_load(&history, 0.10, &mut rng).unwrap();
            assert!((10..=100).contains(&v) && v % 10 == 0);
            seen.insert(v);
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn fake_load_degenerate_histories() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_fake_load(&[5], 0.7, &mut rng).unwrap(), 5);
        assert_eq!(sample_fake_load(&[7, 7, 7], 0.01, &mut rng).unwrap(), 7);
        assert!(matches!(sample_fake_load(&[], 0.1, &mut rng), Err(SimError::EmptyHistory)));
    }

    #[test]
    fn fake_load_includes_ties_at_quantile() {
        let history = [3, 1, 1, 1, 9, 9, 9, 9, 9, 9];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_fake_load(&history, 0.1, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn override_and_window() {
        let cfg = AttackConfig::new(4, 0.48, 0.01, 10).unwrap().with_start(5);
        assert!(!cfg.in_window(4));
        assert!(cfg.in_window(5) && cfg.in_window(14));
        assert!(!cfg.in_window(15));
        assert!(cfg.clone().with_misreport_freq(1.2).is_err());
        assert_eq!(cfg.with_misreport_freq(1.0).unwrap().misreport_freq(), 1.0);
        assert_eq!(AttackConfig::honest(4).unwrap().misreport_freq(), 0.0);
    }
}
