//! Gaussian quadrature on the reference triangle and on edges.
//!
//! Triangle rules are conical products of a Gauss-Legendre rule with a
//! Gauss-Jacobi rule (weight `1 - x`), so all points are interior and all
//! weights are positive for every supported degree. Nodes and weights come
//! from the Golub-Welsch eigenvalue method applied to the Jacobi matrix of
//! the weight's three-term recurrence.

use crate::{Error, Result};
use nalgebra::DMatrix;

/// Maximum exactness degree served by [`quadrature_rule`].
pub const MAX_DEGREE: usize = 12;

/// Quadrature rule on the reference triangle.
///
/// Points are stored as barycentric triples; weights sum to the reference
/// area `1/2`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds a rule exact for all polynomials of total degree `<= degree`.
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    if degree < 1 {
        return Err(Error::InvalidArgument("quadrature degree must be >= 1".into()));
    }
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    let m = degree / 2 + 1;
    let (su, wu) = gauss_jacobi_unit(m);
    let (sv, wv) = gauss_legendre_unit(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (ui, wi) in su.iter().zip(&wu) {
        for (sj, wj) in sv.iter().zip(&wv) {
            let u = *ui;
            let v = (1.0 - u) * sj;
            points.push([1.0 - u - v, u, v]);
            weights.push(wi * wj);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact for degree `2m - 1`.
pub fn edge_rule(degree: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if degree < 1 {
        return Err(Error::InvalidArgument("edge quadrature degree must be >= 1".into()));
    }
    Ok(gauss_legendre_unit(degree / 2 + 1))
}

/// Nodes/weights for weight 1 on `[0, 1]`.
fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    // Monic shifted-Legendre recurrence: a_k = 1/2, b_k = k^2 / (4 (4k^2 - 1)).
    let diag = vec![0.5; m];
    let offdiag: Vec<f64> = (1..m)
        .map(|k| {
            let k = k as f64;
            (k * k / (4.0 * (4.0 * k * k - 1.0))).sqrt()
        })
        .collect();
    golub_welsch(&diag, &offdiag, 1.0)
}

/// Nodes/weights for weight `1 - x` on `[0, 1]`.
fn gauss_jacobi_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi(alpha = 1, beta = 0) recurrence on [-1, 1], then shifted.
    let mut diag = Vec::with_capacity(m);
    let mut offdiag = Vec::with_capacity(m.saturating_sub(1));
    for k in 0..m {
        let kf = k as f64;
        let a = if k == 0 {
            -1.0 / 3.0
        } else {
            -1.0 / ((2.0 * kf + 1.0) * (2.0 * kf + 3.0))
        };
        // Shift [-1, 1] -> [0, 1].
        diag.push((a + 1.0) / 2.0);
        if k >= 1 {
            let b = kf * (kf + 1.0) / ((2.0 * kf + 1.0) * (2.0 * kf + 1.0));
            offdiag.push((b / 4.0).sqrt());
        }
    }
    golub_welsch(&diag, &offdiag, 0.5)
}

/// Eigen-decomposition of the symmetric tridiagonal Jacobi matrix;
/// `mu0` is the total mass of the weight function.
fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let m = diag.len();
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        jac[(i, i)] = diag[i];
        if i + 1 < m {
            jac[(i, i + 1)] = offdiag[i];
            jac[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (eig.eigenvalues[j], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
