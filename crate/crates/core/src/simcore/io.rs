use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttackConfig, EpochRecord, Result, SimError, TelemetryLog, TrafficConfig};
use crate::fsutil::atomic_write;

pub const TELEMETRY_HEADER: &str =
    "epoch,switch_id,actual_load,reported_load,selected,misreported,attack_active";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// JSON sidecar written next to the telemetry CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMetadata {
    pub attack: AttackConfig,
    pub traffic: TrafficConfig,
    pub seed: u64,
    pub misreport_freq: f64,
    pub num_epochs: usize,
}

impl TelemetryLog {
    /// One row per (epoch, switch), booleans as 0/1.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * self.num_switches() * 32);
        out.push_str(TELEMETRY_HEADER);
        out.push('\n');
        for r in &self.records {
            for s in 0..r.actual_load.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.epoch_index,
                    s,
                    r.actual_load[s],
                    r.reported_load[s],
                    u8::from(r.selected_switch == s),
                    u8::from(r.misreported[s]),
                    u8::from(r.attack_active)
                );
            }
        }
        out
    }

    pub fn metadata(&self) -> LogMetadata {
        LogMetadata {
            attack: self.attack.clone(),
            traffic: self.traffic.clone(),
            seed: self.rng_seed,
            misreport_freq: self.attack.misreport_freq(),
            num_epochs: self.records.len(),
        }
    }

    pub fn from_csv(csv: &str, meta: LogMetadata) -> Result<Self> {
        meta.attack.validate()?;
        let n = meta.attack.num_switches;
        let mut lines = csv.lines();
        match lines.next() {
            Some(h) if h.trim() == TELEMETRY_HEADER => {}
            other => return Err(SimError::Malformed(format!("unexpected header {other:?}"))),
        }
        let mut records: Vec<EpochRecord> = Vec::new();
        for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| SimError::Malformed(format!("line {}: {what}", lineno + 2));
            let fields: Vec<u64> = line
                .split(',')
                .map(|f| f.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            let [epoch, switch, actual, reported, selected, misreported, active] = fields[..] else {
                return Err(bad("expected 7 fields"));
            };
            let switch = switch as usize;
            if switch >= n {
                return Err(bad("switch id out of range"));
            }
            if switch == 0 {
                if epoch != records.len() as u64 {
                    return Err(bad("epochs must be consecutive from 0"));
                }
                records.push(EpochRecord {
                    epoch_index: epoch,
                    actual_load: vec![0; n],
                    reported_load: vec![0; n],
                    selected_switch: usize::MAX,
                    misreported: vec![false; n],
                    attack_active: active == 1,
                });
            }
            let rec = records
                .last_mut()
                .filter(|r| r.epoch_index == epoch)
                .ok_or_else(|| bad("rows out of order"))?;
            rec.actual_load[switch] = actual;
            rec.reported_load[switch] = reported;
            rec.misreported[switch] = misreported == 1;
            if selected == 1 {
                rec.selected_switch = switch;
            }
        }
        if records.is_empty() {
            return Err(SimError::Malformed("no epochs".into()));
        }
        if let Some(r) = records.iter().find(|r| r.selected_switch == usize::MAX) {
            return Err(SimError::Malformed(format!("epoch {} has no selected switch", r.epoch_index)));
        }
        Ok(TelemetryLog { records, attack: meta.attack, traffic: meta.traffic, rng_seed: meta.seed })
    }
}

/// Writes `telemetry.csv` and `metadata.json` into `dir`.
pub fn write_log_dir(log: &TelemetryLog, dir: &Path) -> Result<()> {
    atomic_write(&dir.join(TELEMETRY_FILE), log.to_csv().as_bytes())?;
    let meta = serde_json::to_string_pretty(&log.metadata())?;
    atomic_write(&dir.join(METADATA_FILE), meta.as_bytes())?;
    Ok(())
}

pub fn read_log_dir(dir: &Path) -> Result<TelemetryLog> {
    let meta: LogMetadata = serde_json::from_str(&fs::read_to_string(dir.join(METADATA_FILE))?)?;
    let csv = fs::read_to_string(dir.join(TELEMETRY_FILE))?;
    TelemetryLog::from_csv(&csv, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::run_session;

    #[test]
    fn csv_layout_and_roundtrip() {
        let attack = AttackConfig::new(3, 0.5, 0.05, 40).unwrap().with_warmup(10);
        let log = run_session(attack, TrafficConfig::default(), 60, 9).unwrap();
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 1 + 60 * 3);
        let first = csv.lines().nth(1).unwrap();
        assert!(first.starts_with("0,0,"));
        let dir = tempfile::tempdir().unwrap();
        write_log_dir(&log, dir.path()).unwrap();
        assert_eq!(read_log_dir(dir.path()).unwrap(), log);
    }

    #[test]
    fn rejects_gaps() {
        let log = run_session(AttackConfig::honest(2).unwrap(), TrafficConfig::default(), 3, 0).unwrap();
        let csv: String = log
            .to_csv()
            .lines()
            .filter(|l| !l.starts_with("1,"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(TelemetryLog::from_csv(&csv, log.metadata()), Err(SimError::Malformed(_))));
    }
}
