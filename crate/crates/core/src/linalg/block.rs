//! Block operators for the saddle-point and combined systems, their Schur
//! complements, and the matching block preconditioners.
//!
//! Vectors for the 2x2 block systems are stored as `[z; u]` with `z` the
//! adjoint-space coefficients (length M) and `u` the trial-space coefficients
//! (length N).

use super::{InnerSolver, LinearOperator, SparseMatrix};

/// Concatenates the two block components.
pub fn block_vector(top: &[f64], bottom: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(top.len() + bottom.len());
    v.extend_from_slice(top);
    v.extend_from_slice(bottom);
    v
}

/// Splits a block vector at the given top length.
pub fn split_block_vector(v: &[f64], top_len: usize) -> (&[f64], &[f64]) {
    v.split_at(top_len)
}

/// Symmetric indefinite saddle-point operator `[[H, L], [L^T, 0]]`.
pub struct SaddleOp<'a> {
    pub h: &'a SparseMatrix,
    pub l: &'a SparseMatrix,
}

impl LinearOperator for SaddleOp<'_> {
    fn nrows(&self) -> usize {
        self.h.nrows() + self.l.ncols()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.h.nrows();
        let (z, u) = x.split_at(m);
        let (yz, yu) = y.split_at_mut(m);
        self.h.matvec_into(z, yz);
        let lu = self.l.matvec(u);
        for (yi, li) in yz.iter_mut().zip(&lu) {
            *yi += li;
        }
        self.l.matvec_transpose_into(z, yu);
    }
}

/// SPD combined-minimization operator `[[(w+1)H, -L], [-L^T, M]]`.
pub struct SingleStageOp<'a> {
    pub h: &'a SparseMatrix,
    pub l: &'a SparseMatrix,
    pub mass: &'a SparseMatrix,
    pub omega: f64,
}

impl LinearOperator for SingleStageOp<'_> {
    fn nrows(&self) -> usize {
        self.h.nrows() + self.mass.nrows()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.h.nrows();
        let (z, u) = x.split_at(m);
        let (yz, yu) = y.split_at_mut(m);
        self.h.matvec_into(z, yz);
        let lu = self.l.matvec(u);
        let w1 = self.omega + 1.0;
        for (yi, li) in yz.iter_mut().zip(&lu) {
            *yi = w1 * *yi - li;
        }
        self.mass.matvec_into(u, yu);
        let ltz = self.l.matvec_transpose(z);
        for (yi, li) in yu.iter_mut().zip(&ltz) {
            *yi -= li;
        }
    }
}

/// Reduced operator `A = L^T H^{-1} L`; one inner solve per application.
pub struct SchurComplementOp<'a> {
    pub l: &'a SparseMatrix,
    pub inner: &'a InnerSolver,
}

impl SchurComplementOp<'_> {
    /// `v -> L^T H^{-1} L v` as an owned vector.
    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let lv = self.l.matvec(v);
        let mut hinv = vec![0.0; lv.len()];
        self.inner.solve_into(&lv, &mut hinv);
        self.l.matvec_transpose(&hinv)
    }
}

impl LinearOperator for SchurComplementOp<'_> {
    fn nrows(&self) -> usize {
        self.l.ncols()
    }
    fn ncols(&self) -> usize {
        self.l.ncols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.apply_vec(x));
    }
}

/// Reduced single-stage operator `M - (w+1)^{-1} A`.
pub struct SingleStageSchurOp<'a> {
    pub mass: &'a SparseMatrix,
    pub schur: SchurComplementOp<'a>,
    pub omega: f64,
}

impl LinearOperator for SingleStageSchurOp<'_> {
    fn nrows(&self) -> usize {
        self.mass.nrows()
    }
    fn ncols(&self) -> usize {
        self.mass.ncols()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.mass.matvec_into(x, y);
        let av = self.schur.apply_vec(x);
        let scale = 1.0 / (self.omega + 1.0);
        for (yi, ai) in y.iter_mut().zip(&av) {
            *yi -= scale * ai;
        }
    }
}

/// Symmetric block preconditioner of the saddle-point operator, built from
/// the triangular-diagonal-triangular factorization around `B^{-1}` and a
/// Schur-complement preconditioner. `z_inv_apply` must apply the inverse of
/// the (symmetric) Schur preconditioner; each application of the whole block
/// preconditioner costs two `B^{-1}` and two `Z^{-1}` applications.
pub struct SaddlePrecond<'a> {
    pub inner_b: &'a InnerSolver,
    pub l: &'a SparseMatrix,
    pub z_inv_apply: &'a dyn LinearOperator,
}

impl LinearOperator for SaddlePrecond<'_> {
    fn nrows(&self) -> usize {
        self.inner_b.n() + self.l.ncols()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.inner_b.n();
        let (r, s) = x.split_at(m);
        let mut t = vec![0.0; m];
        self.inner_b.solve_into(r, &mut t);
        let ltt = self.l.matvec_transpose(&t);
        let w1 = self.z_inv_apply.apply(s);
        let w2 = self.z_inv_apply.apply(&ltt);
        let n = self.l.ncols();
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = w1[i] - w2[i];
        }
        let lw = self.l.matvec(&w);
        let mut blw = vec![0.0; m];
        self.inner_b.solve_into(&lw, &mut blw);
        let (yz, yu) = y.split_at_mut(m);
        for i in 0..m {
            yz[i] = t[i] - blw[i];
        }
        yu.copy_from_slice(&w);
    }
}

/// SPD block preconditioner of the combined system; same factorization with
/// `B_w^{-1} = (w+1)^{-1} B^{-1}` and positive off-diagonal coupling.
pub struct SingleStagePrecond<'a> {
    pub inner_b: &'a InnerSolver,
    pub l: &'a SparseMatrix,
    pub z_ss_apply: &'a dyn LinearOperator,
    pub omega: f64,
}

impl LinearOperator for SingleStagePrecond<'_> {
    fn nrows(&self) -> usize {
        self.inner_b.n() + self.l.ncols()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.inner_b.n();
        let scale = 1.0 / (self.omega + 1.0);
        let (r, s) = x.split_at(m);
        let mut t = vec![0.0; m];
        self.inner_b.solve_into(r, &mut t);
        for ti in t.iter_mut() {
            *ti *= scale;
        }
        let ltt = self.l.matvec_transpose(&t);
        let w1 = self.z_ss_apply.apply(s);
        let w2 = self.z_ss_apply.apply(&ltt);
        let n = self.l.ncols();
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = w1[i] + w2[i];
        }
        let lw = self.l.matvec(&w);
        let mut blw = vec![0.0; m];
        self.inner_b.solve_into(&lw, &mut blw);
        let (yz, yu) = y.split_at_mut(m);
        for i in 0..m {
            yz[i] = t[i] + scale * blw[i];
        }
        yu.copy_from_slice(&w);
    }
}
