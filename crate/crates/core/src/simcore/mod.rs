//! Discrete-epoch simulation of a least-load SDN balancer with one
//! compromised switch that misreports its byte counters.
//!
//! Every epoch the controller polls all switches, picks the one reporting
//! the smallest byte delta, and assigns newly launched workflows to it. A
//! compromised switch lies with probability `phi`, replacing its true load
//! with a draw from the bottom `rho` quantile of its own load history.

mod attack;
mod io;
mod session;

pub use attack::{compute_phi, sample_fake_load, stealth_quantile, AttackConfig};
pub use io::{read_log_dir, write_log_dir, LogMetadata, TELEMETRY_HEADER};
pub use session::{
    run_session, select_switch, EpochRecord, Simulator, TelemetryLog, TrafficConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid attack configuration: {0}")]
    InvalidAttack(String),
    #[error("invalid traffic configuration: {0}")]
    InvalidTraffic(String),
    #[error("degenerate denominator in misreport frequency: (1-rho)^(S-1) - 1/S = {0:e}")]
    DegenerateDenominator(f64),
    #[error("misreport frequency {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("cannot sample a fake load from an empty history")]
    EmptyHistory,
    #[error("a session needs at least one epoch")]
    NoEpochs,
    #[error("malformed telemetry: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
