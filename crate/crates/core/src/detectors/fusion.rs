use serde::{Deserialize, Serialize};

use super::{Result, ScoreRow, Standardizer};

/// Z-normalized `(recon, stat, mahal)` scores of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTriplet {
    pub recon: f64,
    pub stat: f64,
    pub mahal: f64,
}

impl AnomalyTriplet {
    pub fn to_array(self) -> [f64; 3] {
        [self.recon, self.stat, self.mahal]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { recon: a[0], stat: a[1], mahal: a[2] }
    }
}

/// Training-split mean and standard deviation of each raw score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNorm(pub Standardizer);

impl FusionNorm {
    pub fn fit(train: &[ScoreRow]) -> Result<Self> {
        let rows: Vec<[f64; 3]> = train.iter().map(ScoreRow::triplet).collect();
        Ok(Self(Standardizer::fit(&rows)?))
    }

    pub fn fuse(&self, recon: f64, stat: f64, mahal: f64) -> AnomalyTriplet {
        let s = &self.0;
        AnomalyTriplet { recon: s.apply_one(0, recon), stat: s.apply_one(1, stat), mahal: s.apply_one(2, mahal) }
    }

    pub fn fuse_row(&self, r: &ScoreRow) -> AnomalyTriplet {
        self.fuse(r.recon, r.stat, r.mahal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Label;

    fn row(recon: f64, stat: f64, mahal: f64) -> ScoreRow {
        ScoreRow { session: 0, switch_id: 0, start_epoch: 0, recon, stat, mahal, label: Label::Real }
    }

    #[test]
    fn mean_maps_to_zero_and_constant_component_vanishes() {
        let norm = FusionNorm::fit(&[row(1.0, 4.0, 2.0), row(3.0, 4.0, 6.0)]).unwrap();
        assert_eq!(norm.fuse(2.0, 9.0, 4.0).to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_hand_z_scores() {
        let train = [row(1.0, 0.0, 10.0), row(2.0, 1.0, 20.0), row(6.0, 5.0, 30.0)];
        let norm = FusionNorm::fit(&train).unwrap();
        let z = |x: f64, xs: [f64; 3]| {
            let m = xs.iter().sum::<f64>() / 3.0;
            let sd = (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3.0).sqrt();
            (x - m) / sd
        };
        let t = norm.fuse(4.0, -1.0, 12.0);
        assert!((t.recon - z(4.0, [1.0, 2.0, 6.0])).abs() < 1e-12);
        assert!((t.stat - z(-1.0, [0.0, 1.0, 5.0])).abs() < 1e-12);
        assert!((t.mahal - z(12.0, [10.0, 20.0, 30.0])).abs() < 1e-12);
    }
}
