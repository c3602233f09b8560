use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::attack::{sample_from_sorted, AttackConfig};
use super::{Result, SimError};

/// Background and workflow traffic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    /// Seconds between controller polls (one epoch).
    pub polling_interval: f64,
    /// Seconds a workflow stays pinned to its switch.
    pub workflow_duration: f64,
    /// Mean background packets per second, per switch.
    pub background_rate: f64,
    /// Mean background packet size in bytes.
    pub background_packet_bytes: f64,
    /// Packet sizes are uniform in `mean * [1 - jitter, 1 + jitter]`.
    pub packet_jitter: f64,
    /// Bytes per second added to the switch serving the active workflow.
    pub workflow_rate: f64,
    /// Seconds between workflow launches; at least `workflow_duration`.
    pub session_interval: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            polling_interval: 2.0,
            workflow_duration: 15.0,
            background_rate: 50.0,
            background_packet_bytes: 100.0,
            packet_jitter: 0.5,
            workflow_rate: 20_000.0,
            session_interval: 15.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("polling_interval", self.polling_interval),
            ("workflow_duration", self.workflow_duration),
            ("background_rate", self.background_rate),
            ("background_packet_bytes", self.background_packet_bytes),
            ("workflow_rate", self.workflow_rate),
            ("session_interval", self.session_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidTraffic(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.packet_jitter) {
            return Err(SimError::InvalidTraffic(format!(
                "packet_jitter must lie in [0, 1), got {}",
                self.packet_jitter
            )));
        }
        if self.session_interval < self.workflow_duration {
            return Err(SimError::InvalidTraffic(
                "session_interval shorter than workflow_duration would overlap workflows".into(),
            ));
        }
        Ok(())
    }
}

/// One polling epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_index: u64,
    /// True bytes forwarded since the previous poll.
    pub actual_load: Vec<u64>,
    pub reported_load: Vec<u64>,
    pub selected_switch: usize,
    pub misreported: Vec<bool>,
    pub attack_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryLog {
    pub records: Vec<EpochRecord>,
    pub attack: AttackConfig,
    pub traffic: TrafficConfig,
    pub rng_seed: u64,
}

impl TelemetryLog {
    pub fn num_switches(&self) -> usize {
        self.attack.num_switches
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of epochs in which each switch was selected, over the epochs
    /// accepted by `filter`.
    pub fn selection_shares(&self, filter: impl Fn(&EpochRecord) -> bool) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_switches()];
        let mut total = 0usize;
        for r in self.records.iter().filter(|r| filter(r)) {
            counts[r.selected_switch] += 1;
            total += 1;
        }
        counts
            .into_iter()
            .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    /// Reported load series of one switch.
    pub fn reported_series(&self, switch: usize) -> Vec<u64> {
        self.records.iter().map(|r| r.reported_load[switch]).collect()
    }
}

/// Lowest reported delta wins; ties go to the lowest switch index.
pub fn select_switch(reported_deltas: &[u64]) -> usize {
    let mut best = 0;
    for (i, &d) in reported_deltas.iter().enumerate().skip(1) {
        if d < reported_deltas[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Workflow {
    switch: usize,
    start: f64,
    end: f64,
}

/// Simulator state machine. All randomness comes from the owned generator.
pub struct Simulator {
    attack: AttackConfig,
    traffic: TrafficConfig,
    rng: ChaCha8Rng,
    epoch: u64,
    interarrival: Exp<f64>,
    next_arrival: Vec<f64>,
    history: VecDeque<u64>,
    sorted_history: Vec<u64>,
    workflow: Option<Workflow>,
    next_launch: f64,
}

impl Simulator {
    pub fn new(attack: AttackConfig, traffic: TrafficConfig, seed: u64) -> Result<Self> {
        attack.validate()?;
        traffic.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let interarrival = Exp::new(traffic.background_rate)
            .map_err(|e| SimError::InvalidTraffic(e.to_string()))?;
        let next_arrival = (0..attack.num_switches)
            .map(|_| interarrival.sample(&mut rng))
            .collect();
        Ok(Self {
            next_launch: traffic.polling_interval,
            attack,
            traffic,
            rng,
            epoch: 0,
            interarrival,
            next_arrival,
            history: VecDeque::new(),
            sorted_history: Vec::new(),
            workflow: None,
        })
    }

    /// Loads the compromised switch has observed so far, oldest first.
    pub fn attacker_history(&self) -> impl Iterator<Item = &u64> {
        self.history.iter()
    }

    fn background_bytes(&mut self, switch: usize, t_end: f64) -> u64 {
        let mean = self.traffic.background_packet_bytes;
        let lo = (mean * (1.0 - self.traffic.packet_jitter)).round() as u64;
        let hi = (mean * (1.0 + self.traffic.packet_jitter)).round() as u64;
        let mut bytes = 0;
        while self.next_arrival[switch] < t_end {
            bytes += self.rng.random_range(lo..=hi);
            self.next_arrival[switch] += self.interarrival.sample(&mut self.rng);
        }
        bytes
    }

    fn remember(&mut self, load: u64) {
        self.history.push_back(load);
        let at = self.sorted_history.partition_point(|&v| v < load);
        self.sorted_history.insert(at, load);
        if let Some(cap) = self.attack.history_capacity {
            while self.history.len() > cap {
                let old = self.history.pop_front().expect("non-empty history");
                let at = self.sorted_history.partition_point(|&v| v < old);
                self.sorted_history.remove(at);
            }
        }
    }

    /// Advances one polling interval and returns the controller's view of it.
    pub fn step_epoch(&mut self) -> EpochRecord {
        let n = self.attack.num_switches;
        let period = self.traffic.polling_interval;
        let t0 = self.epoch as f64 * period;
        let t1 = t0 + period;

        let mut actual: Vec<u64> = (0..n).map(|s| self.background_bytes(s, t1)).collect();
        if let Some(wf) = &self.workflow {
            let overlap = (wf.end.min(t1) - wf.start.max(t0)).max(0.0);
            actual[wf.switch] += (self.traffic.workflow_rate * overlap).round() as u64;
            if wf.end <= t1 {
                self.workflow = None;
            }
        }

        let compromised = self.attack.compromised_switch;
        let attack_active = self.attack.in_window(self.epoch)
            && self.history.len() >= self.attack.warmup_history.max(1);
        let mut reported = actual.clone();
        let mut misreported = vec![false; n];
        if attack_active && self.rng.random_bool(self.attack.misreport_freq()) {
            reported[compromised] =
                sample_from_sorted(&self.sorted_history, self.attack.stealth_percentile, &mut self.rng);
            misreported[compromised] = true;
        }
        // Only past epochs are visible to the sampler above.
        self.remember(actual[compromised]);

        let selected = select_switch(&reported);
        while self.next_launch < t1 + period {
            let start = self.next_launch.max(t1);
            self.workflow = Some(Workflow {
                switch: selected,
                start,
                end: start + self.traffic.workflow_duration,
            });
            self.next_launch += self.traffic.session_interval;
        }

        let record = EpochRecord {
            epoch_index: self.epoch,
            actual_load: actual,
            reported_load: reported,
            selected_switch: selected,
            misreported,
            attack_active,
        };
        self.epoch += 1;
        record
    }
}

/// Runs `num_epochs` epochs from a fresh simulator seeded with `seed`.
pub fn run_session(
    attack: AttackConfig,
    traffic: TrafficConfig,
    num_epochs: usize,
    seed: u64,
) -> Result<TelemetryLog> {
    if num_epochs == 0 {
        return Err(SimError::NoEpochs);
    }
    let mut sim = Simulator::new(attack.clone(), traffic.clone(), seed)?;
    let records = (0..num_epochs).map(|_| sim.step_epoch()).collect();
    Ok(TelemetryLog { records, attack, traffic, rng_seed: seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attack(tau: f64, rho: f64, window: u64) -> AttackConfig {
        AttackConfig::new(4, tau, rho, window).unwrap()
    }

    #[test]
    fn select_lowest_with_index_tiebreak() {
        assert_eq!(select_switch(&[100, 50, 80, 90]), 1);
        assert_eq!(select_switch(&[50, 50, 80, 90]), 0);
        assert_eq!(select_switch(&[9, 9, 9, 3]), 3);
    }

    #[test]
    fn honest_session_reports_truth() {
        let log = run_session(AttackConfig::honest(4).unwrap(), TrafficConfig::default(), 300, 7).unwrap();
        for r in &log.records {
            assert_eq!(r.actual_load, r.reported_load);
            assert!(r.misreported.iter().all(|m| !m));
        }
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.epoch_index, i as u64);
        }
    }

    #[test]
    fn always_lying_inside_window() {
        let cfg = attack(0.48, 0.01, 200).with_start(150).with_misreport_freq(1.0).unwrap();
        let log = run_session(cfg, TrafficConfig::default(), 400, 1).unwrap();
        for r in &log.records {
            let in_window = (150..350).contains(&r.epoch_index);
            assert_eq!(r.attack_active, in_window);
            assert_eq!(r.misreported[0], in_window);
            assert!(r.misreported[1..].iter().all(|m| !m));
        }
    }

    #[test]
    fn warmup_delays_first_misreport() {
        let cfg = attack(0.48, 0.01, 1000).with_misreport_freq(1.0).unwrap().with_warmup(50);
        let log = run_session(cfg, TrafficConfig::default(), 80, 2).unwrap();
        assert!(!log.records[49].attack_active);
        assert!(log.records[50].attack_active && log.records[50].misreported[0]);
    }

    #[test]
    fn misreport_rate_within_binomial_band() {
        let cfg = attack(0.48, 0.01, 10_000).with_warmup(0).with_misreport_freq(0.31).unwrap();
        let traffic = TrafficConfig::default();
        let log = run_session(cfg, traffic, 1000, 11).unwrap();
        let lies = log.records.iter().filter(|r| r.misreported[0]).count();
        // 999 attack epochs (history must be non-empty); 3 sigma is about 0.044.
        let frac = lies as f64 / 999.0;
        assert!((0.27..=0.35).contains(&frac), "{frac}");
    }

    #[test]
    fn rolling_history_bounds_memory() {
        let cfg = attack(0.48, 0.01, 1000).with_history_capacity(Some(32)).with_warmup(10);
        let mut sim = Simulator::new(cfg, TrafficConfig::default(), 5).unwrap();
        for _ in 0..200 {
            sim.step_epoch();
        }
        assert_eq!(sim.attacker_history().count(), 32);
        let mut a: Vec<u64> = sim.attacker_history().copied().collect();
        a.sort_unstable();
        assert_eq!(a, sim.sorted_history);
    }

    #[test]
    fn rejects_overlapping_workflows() {
        let traffic = TrafficConfig { session_interval: 10.0, ..TrafficConfig::default() };
        assert!(matches!(
            run_session(AttackConfig::honest(4).unwrap(), traffic, 10, 0),
            Err(SimError::InvalidTraffic(_))
        ));
        assert!(matches!(
            run_session(AttackConfig::honest(4).unwrap(), TrafficConfig::default(), 0, 0),
            Err(SimError::NoEpochs)
        ));
    }

    #[test]
    fn same_seed_same_log() {
        let cfg = attack(0.48, 0.01, 500);
        let a = run_session(cfg.clone(), TrafficConfig::default(), 600, 42).unwrap();
        let b = run_session(cfg, TrafficConfig::default(), 600, 42).unwrap();
        assert_eq!(a, b);
    }
}
