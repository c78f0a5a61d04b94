//! Dense factorizations for oracles and diagnostics.

use super::{LinearOperator, SparseMatrix};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Solves the generalized symmetric eigenproblem `A v = lambda M v` with SPD
/// `M` via Cholesky reduction to standard form.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns (M-orthonormal).
pub fn dense_generalized_eig(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch("generalized eigenproblem needs square inputs".into()));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}, symmetrized against roundoff.
    let x = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let c = (&c + &c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    // Back-transform: v = L^{-T} y.
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(i).into_owned();
        let v = l
            .tr_solve_lower_triangular(&y)
            .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
        vectors.set_column(col, &v);
    }
    Ok((eigenvalues, vectors))
}

/// Dense SPD solve via Cholesky.
pub fn dense_spd_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
    let x = chol.solve(&DVector::from_column_slice(b));
    Ok(x.data.into())
}

/// Forms `L^T H^{-1} L` densely: the reduced operator of the saddle-point
/// system, used by diagnostics and test oracles.
pub fn dense_schur_complement(l: &SparseMatrix, h: &SparseMatrix) -> Result<DMatrix<f64>> {
    let chol = h
        .to_dense()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
    let ld = l.to_dense();
    let hinv_l = chol.solve(&ld);
    let a = ld.transpose() * hinv_l;
    Ok((&a + &a.transpose()) * 0.5)
}

/// Dense LU-backed operator applying `scale * M^{-1}`.
pub struct DenseSolveOp {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    scale: f64,
    n: usize,
}

impl DenseSolveOp {
    pub fn new(mat: DMatrix<f64>, scale: f64) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(Error::DimensionMismatch("DenseSolveOp needs a square matrix".into()));
        }
        let lu = mat.lu();
        if !lu.is_invertible() {
            return Err(Error::InvalidArgument("DenseSolveOp matrix is singular".into()));
        }
        Ok(Self { lu, scale, n })
    }
}

impl LinearOperator for DenseSolveOp {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let sol = self.lu.solve(&DVector::from_column_slice(x)).expect("factorized as invertible");
        for (yi, si) in y.iter_mut().zip(sol.iter()) {
            *yi = self.scale * si;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eig_trivial_cases() {
        let m = DMatrix::<f64>::identity(3, 3);
        let (vals, _) = dense_generalized_eig(&m, &m).unwrap();
        for v in &vals {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let zero = DMatrix::<f64>::zeros(3, 3);
        let (vals, _) = dense_generalized_eig(&zero, &m).unwrap();
        for v in &vals {
            assert!(v.abs() < 1e-12);
        }
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let (vals, _) = dense_generalized_eig(&a, &DMatrix::identity(2, 2)).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_eig_satisfies_the_pencil_equation() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.5, 0.1, 0.0, 0.1, 1.0]);
        let (vals, vecs) = dense_generalized_eig(&a, &m).unwrap();
        for k in 0..3 {
            let v = vecs.column(k).into_owned();
            let lhs = &a * &v;
            let rhs = &m * &v * vals[k];
            assert!((lhs - rhs).norm() < 1e-10);
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        // Rejects a non-SPD mass.
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        assert!(dense_generalized_eig(&a, &bad).is_err());
    }

    #[test]
    fn spd_solve_and_dense_op() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = dense_spd_solve(&a, &[1.0, 2.0]).unwrap();
        let r0 = 4.0 * x[0] + x[1] - 1.0;
        let r1 = x[0] + 3.0 * x[1] - 2.0;
        assert!(r0.abs() < 1e-13 && r1.abs() < 1e-13);

        let op = DenseSolveOp::new(a, -1.0).unwrap();
        let y = op.apply(&[1.0, 2.0]);
        assert!((y[0] + x[0]).abs() < 1e-13 && (y[1] + x[1]).abs() < 1e-13);
    }
}
