//! Dense symmetric linear algebra on [`Tensor2`]: Cholesky factorization and
//! a cyclic Jacobi eigensolver.

use crate::nn::Tensor2;

/// Lower-triangular `L` with `L L^T = a`, or `None` if `a` is not positive
/// definite.
pub fn cholesky(a: &Tensor2) -> Option<Tensor2> {
    assert_eq!(a.rows, a.cols, "cholesky needs a square matrix");
    let n = a.rows;
    let mut l = Tensor2::zeros(n, n);
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            d -= l.at(j, k) * l.at(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        *l.at_mut(j, j) = djj;
        for i in j + 1..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            *l.at_mut(i, j) = s / djj;
        }
    }
    Some(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &Tensor2, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.at(i, k) * y[k];
        }
        y[i] = s / l.at(i, i);
    }
    y
}

/// Inverse of a symmetric positive definite matrix from its Cholesky factor.
pub fn cholesky_inverse(l: &Tensor2) -> Tensor2 {
    let n = l.rows;
    let mut inv = Tensor2::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let y = forward_substitute(l, &e);
        // Back substitution with L^T.
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.at(k, i) * x[k];
            }
            x[i] = s / l.at(i, i);
        }
        for r in 0..n {
            *inv.at_mut(r, c) = x[r];
        }
    }
    inv
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the columns of the second tensor.
pub fn symmetric_eigen(a: &Tensor2) -> (Vec<f64>, Tensor2) {
    assert_eq!(a.rows, a.cols, "eigen decomposition needs a square matrix");
    let n = a.rows;
    let mut m = a.clone();
    let mut vecs = Tensor2::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let scale = a.data.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.at(i, j) * m.at(i, j))
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.at(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.at(k, p);
                    let mkq = m.at(k, q);
                    *m.at_mut(k, p) = c * mkp - s * mkq;
                    *m.at_mut(k, q) = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m.at(p, k);
                    let mqk = m.at(q, k);
                    *m.at_mut(p, k) = c * mpk - s * mqk;
                    *m.at_mut(q, k) = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vecs.at(k, p);
                    let vkq = vecs.at(k, q);
                    *vecs.at_mut(k, p) = c * vkp - s * vkq;
                    *vecs.at_mut(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(j, j).total_cmp(&m.at(i, i)));
    let values = order.iter().map(|&i| m.at(i, i)).collect();
    let sorted = Tensor2::from_fn(n, n, |r, c| vecs.at(r, order[c]));
    (values, sorted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> Tensor2 {
        Tensor2::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]).unwrap()
    }

    #[test]
    fn cholesky_reconstructs_and_inverts() {
        let a = spd();
        let l = cholesky(&a).unwrap();
        assert!(l.matmul_t(&l).max_abs_diff(&a) < 1e-12);
        let inv = cholesky_inverse(&l);
        let eye = Tensor2::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(a.matmul(&inv).max_abs_diff(&eye) < 1e-12);
        let indefinite = Tensor2::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(cholesky(&indefinite).is_none());
    }

    #[test]
    fn eigen_reconstructs() {
        let a = spd();
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let lambda = Tensor2::from_fn(3, 3, |i, j| if i == j { vals[i] } else { 0.0 });
        let rebuilt = vecs.matmul(&lambda).matmul_t(&vecs);
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        assert!((vals.iter().sum::<f64>() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_of_diagonal_and_degenerate() {
        let d = Tensor2::from_rows(&[[1.0, 0.0], [0.0, 5.0]]).unwrap();
        let (vals, _) = symmetric_eigen(&d);
        assert_eq!(vals, vec![5.0, 1.0]);
        let (vals, _) = symmetric_eigen(&Tensor2::zeros(3, 3));
        assert_eq!(vals, vec![0.0; 3]);
    }
}
