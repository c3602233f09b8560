use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::geometry as g;
use super::{Pose, QoeError, Result, Trajectory};

/// Supported spoofing levels, in percent of poses altered.
pub const SPOOF_LEVELS: [u32; 4] = [0, 25, 50, 75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpoofConfig {
    pub level: u32,
    pub noise_sigma_t: f64,
    pub noise_sigma_r_deg: f64,
    pub seed: u64,
}

impl SpoofConfig {
    pub const DEFAULT_SIGMA_T: f64 = 0.05;
    pub const DEFAULT_SIGMA_R_DEG: f64 = 2.0;

    pub fn new(level: u32, seed: u64) -> Result<Self> {
        let c = Self { level, noise_sigma_t: Self::DEFAULT_SIGMA_T, noise_sigma_r_deg: Self::DEFAULT_SIGMA_R_DEG, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !SPOOF_LEVELS.contains(&self.level) {
            return Err(QoeError::InvalidConfig(format!("spoof level {} not in {SPOOF_LEVELS:?}", self.level)));
        }
        if !(self.noise_sigma_t >= 0.0 && self.noise_sigma_r_deg >= 0.0) {
            return Err(QoeError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }

    /// Period-4 mask: 25 alters index 0 of each block, 50 alters 0 and 2,
    /// 75 alters 0, 1 and 2.
    pub fn altered(&self, index: usize) -> bool {
        let k = index % 4;
        match self.level {
            25 => k == 0,
            50 => k % 2 == 0,
            75 => k != 3,
            _ => false,
        }
    }
}

/// Adds Gaussian translation noise and a random-axis rotation of
/// half-normal magnitude to the masked poses.
pub fn spoof(traj: &Trajectory, cfg: &SpoofConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_noise = Normal::new(0.0, cfg.noise_sigma_t).map_err(|e| QoeError::InvalidConfig(e.to_string()))?;
    let r_noise = Normal::new(0.0, cfg.noise_sigma_r_deg).map_err(|e| QoeError::InvalidConfig(e.to_string()))?;
    let poses = traj
        .poses()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !cfg.altered(i) {
                return *p;
            }
            let translation = p.translation.map(|v| v + t_noise.sample(&mut rng));
            let axis: g::Vec3 = [0, 1, 2].map(|_| StandardNormal.sample(&mut rng));
            let angle = r_noise.sample(&mut rng).abs().to_radians();
            let rotation = if g::norm(&axis) > 0.0 {
                g::normalize_quat(&g::quat_mul(&p.rotation, &g::quat_from_axis_angle(&axis, angle)))
            } else {
                p.rotation
            };
            Pose { timestamp: p.timestamp, translation, rotation }
        })
        .collect();
    Trajectory::new(poses)
}

/// Centered moving average whose window shrinks at the edges.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(QoeError::InvalidConfig("smoothing window must be at least 1".into()));
    }
    let n = series.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in series.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let (before, after) = (window / 2, window - 1 - window / 2);
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect())
}

/// A smooth head-motion-like path at 20 Hz; the seed varies the phases.
pub fn synthetic_trajectory(n: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ph: [f64; 4] = [0, 1, 2, 3].map(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let poses = (0..n)
        .map(|i| {
            let t = i as f64 * 0.05;
            let translation = [
                2.0 * (0.2 * t + ph[0]).cos() + 0.1 * (1.3 * t).sin(),
                2.0 * (0.2 * t + ph[0]).sin() + 0.1 * (1.1 * t + ph[1]).cos(),
                1.6 + 0.15 * (0.5 * t + ph[2]).sin(),
            ];
            let yaw = g::quat_from_axis_angle(&[0.0, 0.0, 1.0], 0.2 * t + ph[0] + 0.3 * (0.7 * t).sin());
            let pitch = g::quat_from_axis_angle(&[0.0, 1.0, 0.0], 0.2 * (0.9 * t + ph[3]).sin());
            Pose { timestamp: t, translation, rotation: g::normalize_quat(&g::quat_mul(&yaw, &pitch)) }
        })
        .collect();
    Trajectory::new(poses).expect("timestamps increase")
}
