//! Window statistics. All standardized statistics return 0 on windows whose
//! variance is below [`ZERO_VARIANCE`].

use super::{FeatureError, Result};

pub const ZERO_VARIANCE: f64 = 1e-12;

fn require(xs: &[f64], min: usize) -> Result<()> {
    if xs.len() < min {
        Err(FeatureError::TooFewSamples { needed: min, got: xs.len() })
    } else {
        Ok(())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased central moment of order `k`.
fn central_moment(xs: &[f64], mu: f64, k: i32) -> f64 {
    xs.iter().map(|x| (x - mu).powi(k)).sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> Result<f64> {
    require(xs, 2)?;
    Ok(central_moment(xs, mean(xs), 2).sqrt())
}

/// `m3 / m2^1.5` with biased moments.
pub fn skewness(xs: &[f64]) -> Result<f64> {
    require(xs, 2)?;
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    if m2 < ZERO_VARIANCE {
        return Ok(0.0);
    }
    Ok(central_moment(xs, mu, 3) / m2.powf(1.5))
}

/// `m4 / m2^2 - 3` with biased moments.
pub fn excess_kurtosis(xs: &[f64]) -> Result<f64> {
    require(xs, 2)?;
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    if m2 < ZERO_VARIANCE {
        return Ok(0.0);
    }
    Ok(central_moment(xs, mu, 4) / (m2 * m2) - 3.0)
}

/// Pearson correlation between `xs[1..]` and `xs[..n-1]`.
pub fn autocorr_lag1(xs: &[f64]) -> Result<f64> {
    require(xs, 3)?;
    let head = &xs[..xs.len() - 1];
    let tail = &xs[1..];
    let (mh, mt) = (mean(head), mean(tail));
    let mut cov = 0.0;
    let mut vh = 0.0;
    let mut vt = 0.0;
    for (h, t) in head.iter().zip(tail) {
        cov += (h - mh) * (t - mt);
        vh += (h - mh) * (h - mh);
        vt += (t - mt) * (t - mt);
    }
    let n = head.len() as f64;
    if vh / n < ZERO_VARIANCE || vt / n < ZERO_VARIANCE {
        return Ok(0.0);
    }
    Ok((cov / (vh.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

/// Mean absolute deviation around the mean.
pub fn mad(xs: &[f64]) -> Result<f64> {
    require(xs, 2)?;
    let mu = mean(xs);
    Ok(xs.iter().map(|x| (x - mu).abs()).sum::<f64>() / xs.len() as f64)
}

/// `(last - mean) / std` of the window.
pub fn zscore_last(xs: &[f64]) -> Result<f64> {
    require(xs, 2)?;
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    if m2 < ZERO_VARIANCE {
        return Ok(0.0);
    }
    Ok((xs[xs.len() - 1] - mu) / m2.sqrt())
}

/// Fraction of window values not exceeding the last one.
pub fn percentile_rank_last(xs: &[f64]) -> Result<f64> {
    require(xs, 1)?;
    let last = xs[xs.len() - 1];
    Ok(xs.iter().filter(|&&x| x <= last).count() as f64 / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_constant() {
        assert!(skewness(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap().abs() < 1e-12);
        let c = [5.0, 5.0, 5.0];
        assert_eq!(skewness(&c).unwrap(), 0.0);
        assert_eq!(excess_kurtosis(&c).unwrap(), 0.0);
        assert_eq!(autocorr_lag1(&c).unwrap(), 0.0);
        assert_eq!(mad(&c).unwrap(), 0.0);
        assert_eq!(zscore_last(&c).unwrap(), 0.0);
    }

    #[test]
    fn skewness_matches_moment_oracle() {
        // mean 2.5; deviations -2.5 x3, 7.5; m2 = 18.75; m3 = 93.75.
        let got = skewness(&[0.0, 0.0, 0.0, 10.0]).unwrap();
        let want = 93.75 / 18.75f64.powf(1.5);
        assert!((got - want).abs() < 1e-12);
        assert!((got - 1.1547005383792517).abs() < 1e-12);
        // m4 = (3 * 39.0625 + 3164.0625) / 4 = 820.3125
        let k = excess_kurtosis(&[0.0, 0.0, 0.0, 10.0]).unwrap();
        assert!((k - (820.3125 / (18.75 * 18.75) - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn autocorr_cases() {
        let ramp: Vec<f64> = (0..10).map(|i| 3.0 + 2.0 * i as f64).collect();
        assert!((autocorr_lag1(&ramp).unwrap() - 1.0).abs() < 1e-9);
        // head [1,2,1,2,1], tail [2,1,2,1,2] are exact mirrors.
        let alt = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!((autocorr_lag1(&alt).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(skewness(&[1.0]).is_err());
        assert!(autocorr_lag1(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rank_and_zscore() {
        assert_eq!(percentile_rank_last(&[3.0, 1.0, 2.0]).unwrap(), 2.0 / 3.0);
        let z = zscore_last(&[1.0, 3.0]).unwrap();
        assert!((z - 1.0).abs() < 1e-12);
    }
}
