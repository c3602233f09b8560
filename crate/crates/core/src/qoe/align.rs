use serde::{Deserialize, Serialize};

use super::geometry::{self as g, Mat3, Quat, Vec3};
use super::spoof::smooth;
use super::{Pose, QoeError, Result, Trajectory};
use crate::linalg::symmetric_eigen;
use crate::nn::Tensor2;

/// Greedy nearest-timestamp matching: candidate pairs within `max_dt` are
/// accepted in order of increasing time gap, each pose used at most once.
/// The result is ordered by ground-truth timestamp.
pub fn associate(gt: &Trajectory, est: &Trajectory, max_dt: f64) -> Result<Vec<(Pose, Pose)>> {
    if gt.is_empty() || est.is_empty() {
        return Err(QoeError::NoPairs);
    }
    if !(max_dt >= 0.0) {
        return Err(QoeError::InvalidConfig(format!("max_dt {max_dt} must be non-negative")));
    }
    let (a, b) = (gt.poses(), est.poses());
    let mut candidates = Vec::new();
    let mut lo = 0;
    for (i, p) in a.iter().enumerate() {
        while lo < b.len() && b[lo].timestamp < p.timestamp - max_dt {
            lo += 1;
        }
        for (j, q) in b.iter().enumerate().skip(lo) {
            if q.timestamp > p.timestamp + max_dt {
                break;
            }
            candidates.push(((p.timestamp - q.timestamp).abs(), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(QoeError::NoPairs);
    }
    pairs.sort_unstable();
    Ok(pairs.into_iter().map(|(i, j)| (a[i], b[j])).collect())
}

/// Rigid map taking estimated positions onto ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub rotation: Quat,
    pub rotation_matrix: Mat3,
    pub translation: Vec3,
    pub residual_rmse: f64,
}

impl AlignmentResult {
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        g::add(&g::mat_vec(&self.rotation_matrix, v), &self.translation)
    }
}

fn centroid(points: impl Iterator<Item = Vec3>) -> (Vec3, usize) {
    let mut c = [0.0; 3];
    let mut n = 0;
    for p in points {
        c = g::add(&c, &p);
        n += 1;
    }
    (g::scale(&c, 1.0 / n.max(1) as f64), n)
}

/// Closed-form rotation and translation minimizing the squared position
/// residual, from the top eigenvector of Horn's 4x4 symmetric matrix.
pub fn horn_align(pairs: &[(Pose, Pose)]) -> Result<AlignmentResult> {
    if pairs.len() < 3 {
        return Err(QoeError::DegenerateGeometry(format!("{} pairs, need at least 3", pairs.len())));
    }
    let (pc, _) = centroid(pairs.iter().map(|(p, _)| p.translation));
    let (qc, _) = centroid(pairs.iter().map(|(_, q)| q.translation));

    let mut spread = Tensor2::zeros(3, 3);
    let mut s = [[0.0; 3]; 3];
    for (p, q) in pairs {
        let a = g::sub(&q.translation, &qc);
        let b = g::sub(&p.translation, &pc);
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += a[i] * b[j];
                *spread.at_mut(i, j) += b[i] * b[j];
            }
        }
    }
    let (gt_vals, _) = symmetric_eigen(&spread);
    if gt_vals[1] <= 1e-12 * gt_vals[0].max(1e-300) {
        return Err(QoeError::DegenerateGeometry("ground-truth positions are collinear or coincident".into()));
    }

    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let n = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let (_, vecs) = symmetric_eigen(&Tensor2::from_fn(4, 4, |i, j| n[i][j]));
    let mut rotation = g::normalize_quat(&[vecs.at(0, 0), vecs.at(1, 0), vecs.at(2, 0), vecs.at(3, 0)]);
    if rotation[0] < 0.0 {
        rotation = rotation.map(|v| -v);
    }
    let rotation_matrix = g::quat_to_mat(&rotation);
    let translation = g::sub(&pc, &g::mat_vec(&rotation_matrix, &qc));
    let mut out = AlignmentResult { rotation, rotation_matrix, translation, residual_rmse: 0.0 };
    let sq: f64 = pairs.iter().map(|(p, q)| g::norm(&g::sub(&out.apply(&q.translation), &p.translation)).powi(2)).sum();
    out.residual_rmse = (sq / pairs.len() as f64).sqrt();
    Ok(out)
}

/// Root mean square of the translation part of `gt_i⁻¹ · S · est_i` after
/// aligning with `S`.
pub fn ate_rmse(pairs: &[(Pose, Pose)]) -> Result<f64> {
    let s = horn_align(pairs)?;
    let sq: f64 = pairs
        .iter()
        .map(|(p, q)| {
            let moved = s.apply(&q.translation);
            let e = g::quat_rotate(&g::quat_conj(&p.rotation), &g::sub(&moved, &p.translation));
            g::dot(&e, &e)
        })
        .sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rpe {
    pub delta: usize,
    pub trans_rmse: f64,
    pub rot_rmse_deg: f64,
    /// Per-interval translation error in meters.
    pub trans_errors: Vec<f64>,
    /// Per-interval rotation error in degrees, in `[0, 180]`.
    pub rot_errors_deg: Vec<f64>,
}

fn rmse(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Relative pose error over index intervals of length `delta`.
pub fn rpe(pairs: &[(Pose, Pose)], delta: usize) -> Result<Rpe> {
    if delta == 0 {
        return Err(QoeError::InvalidConfig("delta must be at least 1".into()));
    }
    if pairs.len() < delta + 1 {
        return Err(QoeError::IntervalTooLarge { delta, n: pairs.len() });
    }
    let (mut trans_errors, mut rot_errors_deg) = (Vec::new(), Vec::new());
    for i in 0..pairs.len() - delta {
        let (gt_t, gt_q) = pairs[i].0.between(&pairs[i + delta].0);
        let (est_t, est_q) = pairs[i].1.between(&pairs[i + delta].1);
        let inv = g::quat_conj(&gt_q);
        let t = g::quat_rotate(&inv, &g::sub(&est_t, &gt_t));
        let q = g::quat_mul(&inv, &est_q);
        trans_errors.push(g::norm(&t));
        rot_errors_deg.push(g::quat_angle(&q).to_degrees());
    }
    Ok(Rpe { delta, trans_rmse: rmse(&trans_errors), rot_rmse_deg: rmse(&rot_errors_deg), trans_errors, rot_errors_deg })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeReport {
    pub pairs: usize,
    pub ate_rmse: f64,
    pub alignment: AlignmentResult,
    pub rpe: Rpe,
    pub smooth_window: usize,
    pub rot_errors_smoothed: Vec<f64>,
}

/// Pairs, aligns and measures an estimate against ground truth.
pub fn evaluate(gt: &Trajectory, est: &Trajectory, max_dt: f64, delta: usize, smooth_window: usize) -> Result<QoeReport> {
    let pairs = associate(gt, est, max_dt)?;
    let alignment = horn_align(&pairs)?;
    let ate = ate_rmse(&pairs)?;
    let rpe = rpe(&pairs, delta)?;
    let rot_errors_smoothed = smooth(&rpe.rot_errors_deg, smooth_window)?;
    Ok(QoeReport { pairs: pairs.len(), ate_rmse: ate, alignment, rpe, smooth_window, rot_errors_smoothed })
}
