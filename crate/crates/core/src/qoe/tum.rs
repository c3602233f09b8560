use std::path::Path;

use super::{Pose, QoeError, Result, Trajectory};
use crate::fsutil::atomic_write;

/// Parses `timestamp tx ty tz qx qy qz qw` lines; `#` starts a comment.
/// Quaternions are renormalized on read.
pub fn parse_tum(text: &str) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| QoeError::Parse { line: i + 1, msg };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", v.len())));
        }
        let q = [v[7], v[4], v[5], v[6]];
        let n = super::geometry::quat_norm(&q);
        if !(n.is_finite() && n > 1e-12) {
            return Err(err("zero quaternion".into()));
        }
        poses.push(Pose::new(v[0], [v[1], v[2], v[3]], q.map(|c| c / n)).map_err(|e| err(e.to_string()))?);
    }
    Trajectory::new(poses)
}

pub fn read_tum(path: &Path) -> Result<Trajectory> {
    parse_tum(&std::fs::read_to_string(path)?)
}

pub fn to_tum(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in traj.poses() {
        let [w, x, y, z] = p.rotation;
        let [tx, ty, tz] = p.translation;
        out.push_str(&format!("{} {tx} {ty} {tz} {x} {y} {z} {w}\n", p.timestamp));
    }
    out
}

pub fn write_tum(path: &Path, traj: &Trajectory) -> Result<()> {
    Ok(atomic_write(path, to_tum(traj).as_bytes())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qoe::synthetic_trajectory;

    #[test]
    fn round_trip_is_exact() {
        let t = synthetic_trajectory(50, 4);
        assert_eq!(parse_tum(&to_tum(&t)).unwrap(), t);
    }

    #[test]
    fn comments_and_errors() {
        let t = parse_tum("# header\n0.0 1 2 3 0 0 0 1 # trailing\n\n0.5 1 2 3 0 0 0 2\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.poses()[1].rotation, [1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(parse_tum("0 1 2 3 0 0 0"), Err(QoeError::Parse { line: 1, .. })));
        assert!(matches!(parse_tum("0 1 2 3 0 0 0 x"), Err(QoeError::Parse { .. })));
        assert!(matches!(
            parse_tum("1 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1"),
            Err(QoeError::NonMonotonicTimestamps(1))
        ));
    }
}
