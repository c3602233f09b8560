//! Stealthy switch-misreporting laboratory: a least-load SDN balancer
//! simulator, a hybrid anomaly detector for the resulting telemetry, and
//! trajectory error metrics for the VR workload it serves.

pub mod fsutil;
pub mod linalg;
pub mod metrics;
pub mod simcore;
pub mod features;
pub mod detectors;
pub mod classifiers;
pub mod eval;
pub mod nn;
pub mod qoe;
