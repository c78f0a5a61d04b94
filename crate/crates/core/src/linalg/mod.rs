//! Sparse/dense linear algebra: CSR matrices, a sparse Cholesky solver with
//! fill-reducing orderings, Krylov methods (PCG and restarted GMRES), block
//! operators with their preconditioners, and a dense symmetric generalized
//! eigensolver for diagnostics.

mod block;
mod cg;
mod cholesky;
mod dense;
mod gmres;
mod inner;
mod sparse;

pub use block::{
    block_vector, split_block_vector, SaddleOp, SaddlePrecond, SchurComplementOp, SingleStageOp,
    SingleStagePrecond, SingleStageSchurOp,
};
pub use cg::cg;
pub use cholesky::{FillOrdering, SparseCholesky};
pub use dense::{dense_generalized_eig, dense_schur_complement, dense_spd_solve, DenseSolveOp};
pub use gmres::{gmres, PrecondSide};
pub use inner::InnerSolver;
pub use sparse::SparseMatrix;

/// Matrix-free linear operator.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.apply_into(x, &mut y);
        y
    }
}

/// Identity scaled by a constant; `Scaled::new(-1.0)` is the negated identity.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity {
    pub n: usize,
    pub scale: f64,
}

impl LinearOperator for ScaledIdentity {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.scale * xi;
        }
    }
}

/// Diagonal (Jacobi) operator holding the inverse diagonal.
#[derive(Debug, Clone)]
pub struct DiagonalOp {
    pub inv_diag: Vec<f64>,
}

impl DiagonalOp {
    /// Jacobi preconditioner of a matrix with strictly positive diagonal.
    pub fn jacobi_of(mat: &SparseMatrix) -> Self {
        let inv_diag = mat
            .diagonal()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Self { inv_diag }
    }
}

impl LinearOperator for DiagonalOp {
    fn nrows(&self) -> usize {
        self.inv_diag.len()
    }
    fn ncols(&self) -> usize {
        self.inv_diag.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..x.len() {
            y[i] = self.inv_diag[i] * x[i];
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Convergence record of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub elapsed: f64,
}

impl SolveReport {
    pub fn direct() -> Self {
        SolveReport { iterations: 1, converged: true, residual_history: vec![0.0], elapsed: 0.0 }
    }
}
