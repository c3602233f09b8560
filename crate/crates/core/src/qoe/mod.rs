//! Trajectory-level quality of experience: absolute and relative pose
//! error after rigid alignment, pose spoofing, and series smoothing.

mod align;
mod geometry;
mod spoof;
mod tum;

pub use align::{associate, ate_rmse, evaluate, horn_align, rpe, AlignmentResult, QoeReport, Rpe};
pub use geometry::{Mat3, Quat, Vec3};
pub use spoof::{smooth, spoof, synthetic_trajectory, SpoofConfig, SPOOF_LEVELS};
pub use tum::{parse_tum, read_tum, to_tum, write_tum};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QoeError {
    #[error("no poses could be paired within the time tolerance")]
    NoPairs,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("interval {delta} needs more than {n} pairs")]
    IntervalTooLarge { delta: usize, n: usize },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("timestamps must be strictly increasing (index {0})")]
    NonMonotonicTimestamps(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QoeError>;

/// Tolerance on the unit norm of a pose quaternion.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub timestamp: f64,
    pub translation: Vec3,
    pub rotation: Quat,
}

impl Pose {
    pub fn new(timestamp: f64, translation: Vec3, rotation: Quat) -> Result<Self> {
        if !timestamp.is_finite() || translation.iter().any(|v| !v.is_finite()) {
            return Err(QoeError::InvalidPose(format!("non-finite value at t={timestamp}")));
        }
        let norm = geometry::quat_norm(&rotation);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(QoeError::InvalidPose(format!("quaternion norm {norm} at t={timestamp}")));
        }
        Ok(Self { timestamp, translation, rotation })
    }

    pub fn identity(timestamp: f64) -> Self {
        Self { timestamp, translation: [0.0; 3], rotation: geometry::QUAT_IDENTITY }
    }

    /// `self⁻¹ ∘ other`: the motion from this pose to `other`.
    pub fn between(&self, other: &Pose) -> (Vec3, Quat) {
        let inv = geometry::quat_conj(&self.rotation);
        let t = geometry::quat_rotate(&inv, &geometry::sub(&other.translation, &self.translation));
        (t, geometry::quat_mul(&inv, &other.rotation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if let Some(i) = poses.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(QoeError::NonMonotonicTimestamps(i + 1));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Applies one rigid map to every pose.
    pub fn transformed(&self, rotation: &Quat, translation: &Vec3) -> Self {
        let poses = self
            .poses
            .iter()
            .map(|p| Pose {
                timestamp: p.timestamp,
                translation: geometry::add(&geometry::quat_rotate(rotation, &p.translation), translation),
                rotation: geometry::normalize_quat(&geometry::quat_mul(rotation, &p.rotation)),
            })
            .collect();
        Self { poses }
    }
}
