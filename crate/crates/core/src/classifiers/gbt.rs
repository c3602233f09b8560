use serde::{Deserialize, Serialize};

use super::{check_lengths, class_weights, Result, TRIPLET_DIM};
use crate::features::Label;
use crate::nn::layers::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub max_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_child_hessian: f64,
    /// Rounds without validation improvement before stopping.
    pub patience: usize,
    pub class_weighting: bool,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            max_rounds: 200,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_hessian: 1.0,
            patience: 20,
            class_weighting: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    pub fn eval(&self, x: &[f64; TRIPLET_DIM]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Additive logistic ensemble of shallow regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub config: GbtConfig,
    pub base_score: f64,
    /// Trees with the learning rate already folded into their leaves.
    pub trees: Vec<Node>,
    /// Weighted training log-loss after each kept round (index 0 = base).
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

fn weighted_log_loss(margins: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    margins.iter().zip(y).zip(w).map(|((&z, &y), &w)| w * super::mlp::bce_with_logit(z, y)).sum::<f64>() / total
}

struct Grower<'a> {
    x: &'a [[f64; TRIPLET_DIM]],
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a GbtConfig,
}

impl Grower<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let (g, h) = self.sums(idx);
        Node::Leaf(-self.cfg.learning_rate * g / (h + self.cfg.lambda))
    }

    fn sums(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]))
    }

    fn grow(&self, idx: &mut [usize], depth: usize) -> Node {
        if depth >= self.cfg.max_depth || idx.len() < 2 {
            return self.leaf(idx);
        }
        let (gt, ht) = self.sums(idx);
        let lambda = self.cfg.lambda;
        let parent = gt * gt / (ht + lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..TRIPLET_DIM {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..idx.len() - 1 {
                gl += self.g[idx[k]];
                hl += self.h[idx[k]];
                let (v, next) = (self.x[idx[k]][f], self.x[idx[k + 1]][f]);
                if v == next {
                    continue;
                }
                let (gr, hr) = (gt - gl, ht - hl);
                if hl < self.cfg.min_child_hessian || hr < self.cfg.min_child_hessian {
                    continue;
                }
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, 0.5 * (v + next)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        let mut left: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][feature] <= threshold).collect();
        let mut right: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][feature] > threshold).collect();
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.grow(&mut left, depth + 1)),
            right: Box::new(self.grow(&mut right, depth + 1)),
        }
    }
}

impl GbtModel {
    pub fn margin(&self, x: &[f64; TRIPLET_DIM]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64; TRIPLET_DIM]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Boosts on `(x, y)` and keeps the rounds up to the best weighted
    /// validation log-loss, stopping after `patience` rounds without
    /// improvement.
    pub fn train(
        x: &[[f64; TRIPLET_DIM]],
        y: &[Label],
        val_x: &[[f64; TRIPLET_DIM]],
        val_y: &[Label],
        cfg: &GbtConfig,
    ) -> Result<Self> {
        check_lengths(x, y, 2)?;
        check_lengths(val_x, val_y, 0)?;
        let weights = |ys: &[Label]| if cfg.class_weighting { class_weights(ys) } else { vec![1.0; ys.len()] };
        let targets = |ys: &[Label]| ys.iter().map(|l| if l.is_fake() { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        let (w, t) = (weights(y), targets(y));
        let (vw, vt) = (weights(val_y), targets(val_y));
        let prior = (t.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / w.iter().sum::<f64>()).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (prior / (1.0 - prior)).ln();
        let mut margins = vec![base_score; x.len()];
        let mut val_margins = vec![base_score; val_x.len()];
        let mut model = GbtModel { config: cfg.clone(), base_score, trees: Vec::new(), train_loss: Vec::new(), val_loss: Vec::new() };
        model.train_loss.push(weighted_log_loss(&margins, &t, &w));
        let has_val = !val_x.is_empty();
        if has_val {
            model.val_loss.push(weighted_log_loss(&val_margins, &vt, &vw));
        }
        let (mut best_round, mut best_val) = (0, model.val_loss.first().copied().unwrap_or(f64::INFINITY));
        for round in 1..=cfg.max_rounds {
            let p: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
            let g: Vec<f64> = p.iter().zip(&t).zip(&w).map(|((p, t), w)| w * (p - t)).collect();
            let h: Vec<f64> = p.iter().zip(&w).map(|(p, w)| w * p * (1.0 - p)).collect();
            let mut idx: Vec<usize> = (0..x.len()).collect();
            let tree = Grower { x, g: &g, h: &h, cfg }.grow(&mut idx, 0);
            for (m, xi) in margins.iter_mut().zip(x) {
                *m += tree.eval(xi);
            }
            for (m, xi) in val_margins.iter_mut().zip(val_x) {
                *m += tree.eval(xi);
            }
            model.trees.push(tree);
            model.train_loss.push(weighted_log_loss(&margins, &t, &w));
            if has_val {
                let vl = weighted_log_loss(&val_margins, &vt, &vw);
                model.val_loss.push(vl);
                if vl < best_val {
                    (best_round, best_val) = (round, vl);
                } else if round - best_round >= cfg.patience {
                    break;
                }
            } else {
                best_round = round;
            }
        }
        model.trees.truncate(best_round);
        model.train_loss.truncate(best_round + 1);
        model.val_loss.truncate(best_round + 1);
        Ok(model)
    }
}
