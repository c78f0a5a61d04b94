//! Shared helpers and independent oracles for the integration suites.
//!
//! Everything here recomputes quantities through routes that do not share
//! code with the implementation paths under test: dense all-pairs assembly,
//! adaptive Runge-Kutta integration along characteristics, and dense
//! factorizations.

#![allow(dead_code)]

use llstar::linalg::SparseMatrix;
use llstar::mesh::{bary_apply, generate_square_mesh, Mesh};
use llstar::problem::{apply_operator, Coefficients, OperatorSide, Point};
use llstar::quadrature::quadrature_rule;
use llstar::space::{build_space, FunctionSpace, SpaceConstraint};
use nalgebra::DMatrix;
use std::sync::Arc;

pub const ALPHA: f64 = 3.0 * std::f64::consts::PI / 16.0;
pub const SEED: u64 = 7;
pub const JITTER: f64 = 0.2;

pub fn paper_coeffs(sigma_in: f64) -> Coefficients {
    Coefficients::new(ALPHA, sigma_in, 1e-4).unwrap()
}

pub fn mesh(n: usize, coeffs: &Coefficients) -> Arc<Mesh> {
    Arc::new(generate_square_mesh(n, JITTER, SEED, coeffs).unwrap())
}

pub fn spaces_p1_p2(
    mesh: &Arc<Mesh>,
) -> (Arc<FunctionSpace>, Arc<FunctionSpace>) {
    let u = build_space(mesh, 1, SpaceConstraint::None).unwrap();
    let z = build_space(mesh, 2, SpaceConstraint::OutflowClosure).unwrap();
    (u, z)
}

/// Dense all-pairs assembly of `<phi_j, L* psi_i>`, evaluating the adjoint
/// action through the pointwise operator application rather than the
/// element kernels used by the sparse assembler.
pub fn dense_assemble_l(
    u_space: &FunctionSpace,
    z_space: &FunctionSpace,
    coeffs: &Coefficients,
    quad_degree: usize,
) -> DMatrix<f64> {
    dense_assemble_mixed(u_space, z_space, coeffs, quad_degree, OperatorSide::Adjoint)
}

/// Dense assembly of `<L phi_j, psi_i>` (the primal route of the duality
/// identity).
pub fn dense_assemble_primal(
    u_space: &FunctionSpace,
    z_space: &FunctionSpace,
    coeffs: &Coefficients,
    quad_degree: usize,
) -> DMatrix<f64> {
    let rule = quadrature_rule(quad_degree).unwrap();
    let map = z_space.mesh.map_to_ancestor(&u_space.mesh).unwrap();
    let mut out = DMatrix::zeros(z_space.dim, u_space.dim);
    for (tz, &(tu, bmap)) in map.iter().enumerate() {
        let scale = 2.0 * z_space.mesh.triangle_area(tz);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let p = z_space.mesh.point_at(tz, *lam);
            let (zv, _) = z_space.eval_basis(tz, *lam);
            let u_lam = bary_apply(&bmap, *lam);
            let (uv, ug) = u_space.eval_basis(tu, u_lam);
            for (i, &zn) in z_space.element_dofs[tz].iter().enumerate() {
                let Some(row) = z_space.reduced_index(zn) else { continue };
                for (j, &un) in u_space.element_dofs[tu].iter().enumerate() {
                    let Some(col) = u_space.reduced_index(un) else { continue };
                    let lphi =
                        apply_operator(OperatorSide::Primal, coeffs, uv[j], ug[j], p);
                    out[(row, col)] += scale * w * lphi * zv[i];
                }
            }
        }
    }
    out
}

fn dense_assemble_mixed(
    u_space: &FunctionSpace,
    z_space: &FunctionSpace,
    coeffs: &Coefficients,
    quad_degree: usize,
    side: OperatorSide,
) -> DMatrix<f64> {
    let rule = quadrature_rule(quad_degree).unwrap();
    let map = z_space.mesh.map_to_ancestor(&u_space.mesh).unwrap();
    let mut out = DMatrix::zeros(z_space.dim, u_space.dim);
    for (tz, &(tu, bmap)) in map.iter().enumerate() {
        let scale = 2.0 * z_space.mesh.triangle_area(tz);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let p = z_space.mesh.point_at(tz, *lam);
            let (zv, zg) = z_space.eval_basis(tz, *lam);
            let u_lam = bary_apply(&bmap, *lam);
            let (uv, _) = u_space.eval_basis(tu, u_lam);
            for (i, &zn) in z_space.element_dofs[tz].iter().enumerate() {
                let Some(row) = z_space.reduced_index(zn) else { continue };
                let action = apply_operator(side, coeffs, zv[i], zg[i], p);
                for (j, &un) in u_space.element_dofs[tu].iter().enumerate() {
                    let Some(col) = u_space.reduced_index(un) else { continue };
                    out[(row, col)] += scale * w * action * uv[j];
                }
            }
        }
    }
    out
}

/// Dense mass matrix via all-pairs quadrature.
pub fn dense_assemble_mass(space: &FunctionSpace, quad_degree: usize) -> DMatrix<f64> {
    let rule = quadrature_rule(quad_degree).unwrap();
    let mut out = DMatrix::zeros(space.dim, space.dim);
    for t in 0..space.mesh.num_triangles() {
        let scale = 2.0 * space.mesh.triangle_area(t);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let (v, _) = space.eval_basis(t, *lam);
            for (i, &ni) in space.element_dofs[t].iter().enumerate() {
                let Some(row) = space.reduced_index(ni) else { continue };
                for (j, &nj) in space.element_dofs[t].iter().enumerate() {
                    let Some(col) = space.reduced_index(nj) else { continue };
                    out[(row, col)] += scale * w * v[i] * v[j];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff_dense(a: &DMatrix<f64>, b: &SparseMatrix) -> f64 {
    let bd = b.to_dense();
    (a - bd).amax()
}

/// Adaptive step-doubling Runge-Kutta integration of `psi' = -sigma psi`
/// along the characteristic from the inflow boundary to `p`.
///
/// The absorption jumps across the four interface lines; the integration is
/// split at their (scalar) crossing times so no step straddles a
/// discontinuity, and each smooth piece is integrated adaptively with
/// pointwise absorption lookups.
pub fn ode_characteristic_value(coeffs: &Coefficients, p: Point, rtol: f64) -> f64 {
    let b = coeffs.b;
    let total = llstar::problem::backward_exit_length(b, p);
    let entry = [p[0] - total * b[0], p[1] - total * b[1]];
    let sigma = |t: f64| -> f64 {
        let x = [entry[0] + t * b[0], entry[1] + t * b[1]];
        llstar::problem::sigma_at(coeffs, x)
    };

    let mut breaks = vec![0.0, total];
    let r = &coeffs.omega_in;
    for (axis, lines) in [(0usize, [r.x0, r.x1]), (1usize, [r.y0, r.y1])] {
        if b[axis] != 0.0 {
            for line in lines {
                let t = (line - entry[axis]) / b[axis];
                if t > 0.0 && t < total {
                    breaks.push(t);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);

    let rk4 = |t: f64, y: f64, h: f64| -> f64 {
        let k1 = -sigma(t) * y;
        let k2 = -sigma(t + 0.5 * h) * (y + 0.5 * h * k1);
        let k3 = -sigma(t + 0.5 * h) * (y + 0.5 * h * k2);
        let k4 = -sigma(t + h) * (y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };

    let atol = 1e-300;
    let mut y = coeffs.g;
    for seg in breaks.windows(2) {
        let (start, end) = (seg[0], seg[1]);
        if end - start <= 0.0 {
            continue;
        }
        let mut t = start;
        let mut h = ((end - start) / 16.0).max(1e-13);
        while t < end {
            if y == 0.0 {
                // Fully absorbed below the representable range.
                return 0.0;
            }
            h = h.min(end - t);
            let full = rk4(t, y, h);
            let half = rk4(t + 0.5 * h, rk4(t, y, 0.5 * h), 0.5 * h);
            let err = (full - half).abs() / 15.0;
            let tol = atol + rtol * half.abs();
            if err <= tol || h <= 1e-14 {
                t += h;
                y = half + (half - full) / 15.0;
                let grow = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 4.0 };
                h *= grow.clamp(0.3, 4.0);
            } else {
                h *= (0.9 * (tol / err).powf(0.25)).clamp(0.1, 0.9);
            }
        }
    }
    y
}

/// Agreement measure used for oracle comparisons: absolute for tiny values,
/// relative otherwise.
pub fn mixed_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}
