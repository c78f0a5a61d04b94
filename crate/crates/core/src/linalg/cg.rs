//! Preconditioned conjugate gradients.

use super::{axpy, dot, LinearOperator, SolveReport};
use crate::{Error, Result};
use std::time::Instant;

/// Solves `op x = rhs` for SPD `op` with an SPD preconditioner, starting from
/// zero. Convergence is a relative reduction of the preconditioned residual
/// norm `sqrt(r^T P r)` (the norm the CG recurrence natively tracks). Stops
/// at `maxit` with `converged = false`; a non-positive curvature `p^T A p`
/// is reported as an error.
pub fn cg(
    op: &dyn LinearOperator,
    rhs: &[f64],
    precond: &dyn LinearOperator,
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = rhs.len();
    if op.nrows() != n || op.ncols() != n {
        return Err(Error::DimensionMismatch("cg operator/rhs sizes differ".into()));
    }
    let start = Instant::now();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = precond.apply(&r);
    let mut rz = dot(&r, &z);
    let norm0 = rz.max(0.0).sqrt();
    let mut history = vec![norm0];
    if norm0 == 0.0 {
        let report = SolveReport {
            iterations: 0,
            converged: true,
            residual_history: history,
            elapsed: start.elapsed().as_secs_f64(),
        };
        return Ok((x, report));
    }
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..maxit {
        op.apply_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::IndefiniteOperator(pq));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        precond.apply_into(&r, &mut z);
        let rz_new = dot(&r, &z);
        iterations += 1;
        let norm = rz_new.max(0.0).sqrt();
        history.push(norm);
        if norm <= tol * norm0 {
            converged = true;
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let report = SolveReport {
        iterations,
        converged,
        residual_history: history,
        elapsed: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ScaledIdentity, SparseMatrix};

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = SparseMatrix::identity(5);
        let p = ScaledIdentity { n: 5, scale: 1.0 };
        let rhs = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let (x, report) = cg(&a, &rhs, &p, 1e-12, 100).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for (xi, bi) in x.iter().zip(&rhs) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_two_by_two_terminates_in_two_steps() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 4.0)]);
        let p = ScaledIdentity { n: 2, scale: 1.0 };
        let (x, report) = cg(&a, &[1.0, 1.0], &p, 1e-14, 10).unwrap();
        assert!(report.converged && report.iterations <= 2);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_returns_zero_without_iterating() {
        let a = SparseMatrix::identity(3);
        let p = ScaledIdentity { n: 3, scale: 1.0 };
        let (x, report) = cg(&a, &[0.0; 3], &p, 1e-10, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indefinite_operator_is_reported() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        let p = ScaledIdentity { n: 2, scale: 1.0 };
        match cg(&a, &[0.0, 1.0], &p, 1e-10, 10) {
            Err(Error::IndefiniteOperator(_)) => {}
            other => panic!("expected indefiniteness, got {other:?}"),
        }
    }

    #[test]
    fn maxit_reports_nonconvergence() {
        // Moderately conditioned system, far too few iterations allowed.
        let n = 50;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 2.0 + i as f64));
            if i + 1 < n {
                triplets.push((i, i + 1, -1.0));
                triplets.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, triplets);
        let p = ScaledIdentity { n, scale: 1.0 };
        let rhs = vec![1.0; n];
        let (_, report) = cg(&a, &rhs, &p, 1e-14, 3).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 3);
        assert_eq!(report.residual_history.len(), 4);
    }
}
