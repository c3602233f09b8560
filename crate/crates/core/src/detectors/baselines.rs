//! Classic unsupervised detectors. Every `score` is "higher is more
//! anomalous".

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectorError, Result};
use crate::linalg::{cholesky, forward_substitute};
use crate::nn::Tensor2;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_rows(rows: &[Vec<f64>], needed: usize) -> Result<usize> {
    if rows.len() < needed {
        return Err(DetectorError::InsufficientData { needed, got: rows.len() });
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(DetectorError::DimensionMismatch { expected: d, got: bad.len() });
    }
    Ok(d)
}

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ITree {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: Box<ITree>, right: Box<ITree> },
}

impl ITree {
    fn build<R: Rng>(rows: &[&Vec<f64>], depth: usize, limit: usize, rng: &mut R) -> Self {
        if depth >= limit || rows.len() <= 1 {
            return ITree::Leaf { size: rows.len() };
        }
        let d = rows[0].len();
        let spread: Vec<(usize, f64, f64)> = (0..d)
            .map(|j| {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                (j, lo, hi)
            })
            .filter(|&(_, lo, hi)| hi > lo)
            .collect();
        if spread.is_empty() {
            return ITree::Leaf { size: rows.len() };
        }
        let (feature, lo, hi) = spread[rng.random_range(0..spread.len())];
        let value = rng.random_range(lo..hi);
        let (l, r): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) = rows.iter().partition(|row| row[feature] < value);
        ITree::Split {
            feature,
            value,
            left: Box::new(Self::build(&l, depth + 1, limit, rng)),
            right: Box::new(Self::build(&r, depth + 1, limit, rng)),
        }
    }

    fn path_length(&self, x: &[f64], depth: usize) -> f64 {
        match self {
            ITree::Leaf { size } => depth as f64 + average_path_length(*size),
            ITree::Split { feature, value, left, right } => {
                if x[*feature] < *value {
                    left.path_length(x, depth + 1)
                } else {
                    right.path_length(x, depth + 1)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<ITree>,
    subsample: usize,
}

impl IsolationForest {
    pub fn fit(rows: &[Vec<f64>], n_trees: usize, subsample: usize, seed: u64) -> Result<Self> {
        check_rows(rows, 2)?;
        let psi = subsample.min(rows.len()).max(2);
        let limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let pick: Vec<&Vec<f64>> = sample(&mut rng, rows.len(), psi).iter().map(|i| &rows[i]).collect();
                ITree::build(&pick, 0, limit, &mut rng)
            })
            .collect();
        Ok(Self { trees, subsample: psi })
    }

    /// `2^(-E[h(x)] / c(psi))`, in `(0, 1]`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mean_h = self.trees.iter().map(|t| t.path_length(x, 0)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean_h / average_path_length(self.subsample))
    }
}

/// Local outlier factor against a fixed reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lof {
    k: usize,
    reference: Vec<Vec<f64>>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

impl Lof {
    /// Indices and distances of the `k` nearest reference points, skipping
    /// index `skip`.
    fn neighbours(reference: &[Vec<f64>], x: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = reference
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != skip)
            .map(|(i, r)| (i, sq_dist(r, x).sqrt()))
            .collect();
        let k = k.min(d.len());
        d.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(k);
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d
    }

    pub fn fit(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        check_rows(rows, k + 1)?;
        let nn: Vec<Vec<(usize, f64)>> = (0..rows.len()).map(|i| Self::neighbours(rows, &rows[i], k, Some(i))).collect();
        let k_distance: Vec<f64> = nn.iter().map(|n| n.last().map_or(0.0, |p| p.1)).collect();
        let lrd = nn
            .iter()
            .map(|n| {
                let reach = n.iter().map(|&(o, d)| d.max(k_distance[o])).sum::<f64>() / n.len() as f64;
                1.0 / (reach + 1e-12)
            })
            .collect();
        Ok(Self { k, reference: rows.to_vec(), k_distance, lrd })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let n = Self::neighbours(&self.reference, x, self.k, None);
        let reach = n.iter().map(|&(o, d)| d.max(self.k_distance[o])).sum::<f64>() / n.len() as f64;
        let lrd_x = 1.0 / (reach + 1e-12);
        n.iter().map(|&(o, _)| self.lrd[o]).sum::<f64>() / n.len() as f64 / lrd_x
    }
}

/// k-means++ seeding followed by Lloyd iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
}

fn kmeans_pp<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![rows[rng.random_range(0..rows.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> =
            rows.iter().map(|r| centroids.iter().map(|c| sq_dist(r, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..rows.len())
        } else {
            let mut u = rng.random_range(0.0..total);
            let mut idx = rows.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        };
        centroids.push(rows[next].clone());
    }
    centroids
}

impl KMeans {
    pub fn fit(rows: &[Vec<f64>], k: usize, seed: u64) -> Result<Self> {
        let d = check_rows(rows, k.max(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = kmeans_pp(rows, k, &mut rng);
        let mut assign = vec![usize::MAX; rows.len()];
        for _ in 0..300 {
            let mut changed = false;
            for (a, r) in assign.iter_mut().zip(rows) {
                let best = nearest(&centroids, r).0;
                changed |= *a != best;
                *a = best;
            }
            if !changed {
                break;
            }
            for (c, centroid) in centroids.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = rows.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(r, _)| r).collect();
                if members.is_empty() {
                    continue;
                }
                *centroid = (0..d).map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64).collect();
            }
        }
        Ok(Self { centroids })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        nearest(&self.centroids, x).1.sqrt()
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(c, x)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// One full-covariance Gaussian, stored with its Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub cov: Tensor2,
    chol: Tensor2,
    log_det: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Tensor2) -> Result<Self> {
        let chol = cholesky(&cov).ok_or(DetectorError::SingularCovariance)?;
        let log_det = 2.0 * (0..chol.rows).map(|i| chol.at(i, i).ln()).sum::<f64>();
        Ok(Self { mean, cov, chol, log_det })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let y = forward_substitute(&self.chol, &c);
        let maha: f64 = y.iter().map(|v| v * v).sum();
        let d = self.mean.len() as f64;
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + maha)
    }
}

/// Gaussian mixture fitted by EM; scores are negative log-likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian>,
    /// Mean per-sample log-likelihood of the training data.
    pub log_likelihood: f64,
    /// False when EM hit the iteration cap before the tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Added to every covariance diagonal.
    pub reg: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { components: 2, tol: 1e-6, max_iter: 200, restarts: 5, reg: 1e-6, seed: 0 }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Gmm {
    pub fn log_likelihood_of(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> =
            self.weights.iter().zip(&self.components).map(|(w, g)| w.ln() + g.log_density(x)).collect();
        log_sum_exp(&terms)
    }

    /// Posterior component probabilities of `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let terms: Vec<f64> =
            self.weights.iter().zip(&self.components).map(|(w, g)| w.ln() + g.log_density(x)).collect();
        let z = log_sum_exp(&terms);
        terms.iter().map(|t| (t - z).exp()).collect()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        -self.log_likelihood_of(x)
    }

    /// Best (highest likelihood) of `restarts` seeded EM runs.
    pub fn fit(rows: &[Vec<f64>], cfg: &GmmConfig) -> Result<Self> {
        let d = check_rows(rows, cfg.components.max(1) + 1)?;
        let mut best: Option<Gmm> = None;
        for r in 0..cfg.restarts.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            let run = Self::em(rows, d, cfg, &mut rng)?;
            if best.as_ref().is_none_or(|b| run.log_likelihood > b.log_likelihood) {
                best = Some(run);
            }
        }
        Ok(best.expect("at least one restart"))
    }

    fn em<R: Rng>(rows: &[Vec<f64>], d: usize, cfg: &GmmConfig, rng: &mut R) -> Result<Self> {
        let k = cfg.components;
        let n = rows.len();
        let global = Self::weighted_cov(rows, &vec![1.0; n], &Self::weighted_mean(rows, &vec![1.0; n], d), cfg.reg);
        let mut model = Gmm {
            weights: vec![1.0 / k as f64; k],
            components: kmeans_pp(rows, k, rng)
                .into_iter()
                .map(|m| Gaussian::new(m, global.clone()))
                .collect::<Result<_>>()?,
            log_likelihood: f64::NEG_INFINITY,
            converged: false,
        };
        let mut resp = vec![vec![0.0; k]; n];
        for _ in 0..cfg.max_iter {
            let mut total = 0.0;
            for (x, r) in rows.iter().zip(resp.iter_mut()) {
                let terms: Vec<f64> =
                    model.weights.iter().zip(&model.components).map(|(w, g)| w.ln() + g.log_density(x)).collect();
                let z = log_sum_exp(&terms);
                total += z;
                for (ri, t) in r.iter_mut().zip(&terms) {
                    *ri = (t - z).exp();
                }
            }
            let ll = total / n as f64;
            let improvement = ll - model.log_likelihood;
            model.log_likelihood = ll;
            if improvement.abs() < cfg.tol {
                model.converged = true;
                break;
            }
            for c in 0..k {
                let w: Vec<f64> = resp.iter().map(|r| r[c]).collect();
                let nk: f64 = w.iter().sum();
                if nk < 1e-10 {
                    continue;
                }
                let mean = Self::weighted_mean(rows, &w, d);
                let cov = Self::weighted_cov(rows, &w, &mean, cfg.reg);
                model.weights[c] = nk / n as f64;
                model.components[c] = Gaussian::new(mean, cov)?;
            }
        }
        Ok(model)
    }

    fn weighted_mean(rows: &[Vec<f64>], w: &[f64], d: usize) -> Vec<f64> {
        let total: f64 = w.iter().sum();
        (0..d).map(|j| rows.iter().zip(w).map(|(r, wi)| wi * r[j]).sum::<f64>() / total).collect()
    }

    fn weighted_cov(rows: &[Vec<f64>], w: &[f64], mean: &[f64], reg: f64) -> Tensor2 {
        let d = mean.len();
        let total: f64 = w.iter().sum();
        let mut cov = Tensor2::zeros(d, d);
        for (r, wi) in rows.iter().zip(w) {
            for i in 0..d {
                let ci = r[i] - mean[i];
                for j in 0..d {
                    *cov.at_mut(i, j) += wi * ci * (r[j] - mean[j]);
                }
            }
        }
        cov.scale_assign(1.0 / total);
        for i in 0..d {
            *cov.at_mut(i, i) += reg;
        }
        cov
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn blob(n: usize, center: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(rng);
                        c + scale * z
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn harmonic_normalization() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let h255: f64 = (1..=255).map(|i| 1.0 / i as f64).sum();
        let exact = 2.0 * h255 - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - exact).abs() < 0.01);
    }

    #[test]
    fn isolation_forest_ranks_the_outlier_first() {
        let mut rows = vec![vec![0.0, 0.0]; 100];
        rows.push(vec![10.0, 0.0]);
        let f = IsolationForest::fit(&rows, 100, 256, 1).unwrap();
        let outlier = f.score(&rows[100]);
        assert!(rows[..100].iter().all(|r| f.score(r) < outlier));
        assert!(outlier > 0.0 && outlier < 1.0);
    }

    #[test]
    fn kmeans_single_cluster_is_the_mean() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let km = KMeans::fit(&rows, 1, 0).unwrap();
        assert!(sq_dist(&km.centroids[0], &[1.0, 1.0]) < 1e-24);
        assert!((km.score(&[1.0, 4.0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lof_flags_isolated_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = blob(200, &[0.0, 0.0], 1.0, &mut rng);
        let lof = Lof::fit(&rows, 20).unwrap();
        let inlier = lof.score(&[0.1, -0.2]);
        let outlier = lof.score(&[8.0, 8.0]);
        assert!(inlier < 1.5 && outlier > 3.0, "{inlier} {outlier}");
    }

    #[test]
    fn gmm_separates_two_clusters_and_matches_direct_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = blob(300, &[0.0, 0.0], 0.5, &mut rng);
        rows.extend(blob(300, &[10.0, 10.0], 0.5, &mut rng));
        let gmm = Gmm::fit(&rows, &GmmConfig::default()).unwrap();
        assert!(gmm.converged);
        for x in [&rows[0], &rows[450]] {
            let r = gmm.responsibilities(x);
            assert!(r.iter().any(|&p| p > 1.0 - 1e-9), "{r:?}");
        }
        // Direct density: sum_k w_k N(x; mu_k, S_k) with an explicit 2x2
        // inverse and determinant.
        let x = [1.0, -0.5];
        let mut density = 0.0;
        for (w, g) in gmm.weights.iter().zip(&gmm.components) {
            let (a, b, c, d) = (g.cov.at(0, 0), g.cov.at(0, 1), g.cov.at(1, 0), g.cov.at(1, 1));
            let det = a * d - b * c;
            let (u, v) = (x[0] - g.mean[0], x[1] - g.mean[1]);
            let q = (d * u * u - (b + c) * u * v + a * v * v) / det;
            density += w * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
        }
        assert!((gmm.log_likelihood_of(&x) - density.ln()).abs() < 1e-6);
        assert!(gmm.score(&[5.0, 5.0]) > gmm.score(&[0.0, 0.0]));
    }
}
