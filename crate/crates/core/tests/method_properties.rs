//! Each method's algebraic solution minimizes its associated least-squares
//! functional, and the methods relate to one another exactly as the
//! projection characterizations predict.

mod common;

use common::*;
use llstar::assembly::{assemble_h, assemble_rhs_weak};
use llstar::linalg::{dense_spd_solve, InnerSolver};
use llstar::methods::{
    solve_llstar, solve_two_stage, AssembledSystem, BoundaryTreatment, MethodKind, SolverOptions,
};
use llstar::quadrature::quadrature_rule;
use llstar::space::{build_space, MeshField, SpaceConstraint};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

struct DenseFunctionals {
    h_chol: Cholesky<f64, nalgebra::Dyn>,
    l: DMatrix<f64>,
    m: DMatrix<f64>,
    r: DVector<f64>,
}

impl DenseFunctionals {
    fn new(sys: &AssembledSystem) -> Self {
        let h = sys.h.to_dense();
        DenseFunctionals {
            h_chol: h.cholesky().unwrap(),
            l: sys.l.to_dense(),
            m: sys.mass.to_dense(),
            r: DVector::from_column_slice(&sys.rhs),
        }
    }

    /// `||P(v - u_exact)||^2` through the data identity `<u_exact, L* w> = r(w)`.
    fn projected_error2(&self, v: &[f64]) -> f64 {
        let lv = &self.l * DVector::from_column_slice(v) - &self.r;
        let hinv = self.h_chol.solve(&lv);
        lv.dot(&hinv)
    }

    /// `||v - P v||^2 = v^T M v - v^T A v`.
    fn defect2(&self, v: &[f64]) -> f64 {
        let vd = DVector::from_column_slice(v);
        let lv = &self.l * &vd;
        let hinv = self.h_chol.solve(&lv);
        ((&self.m * &vd).dot(&vd) - lv.dot(&hinv)).max(0.0)
    }

    fn functional(&self, kind: MethodKind, v: &[f64]) -> f64 {
        match kind {
            MethodKind::LLStarInverse => self.projected_error2(v),
            MethodKind::TwoStage => self.projected_error2(v) + self.defect2(v),
            MethodKind::SingleStage { omega } => {
                self.projected_error2(v) + (omega + 1.0) / omega * self.defect2(v)
            }
            MethodKind::LLStar => unreachable!("no trial-space functional"),
        }
    }
}

#[test]
fn each_solution_minimizes_its_functional() {
    let coeffs = paper_coeffs(10.0);
    let mesh = mesh(4, &coeffs);
    let (u, z) = spaces_p1_p2(&mesh);
    let sys = AssembledSystem::build(&u, &z, &coeffs, BoundaryTreatment::Weak).unwrap();
    let dense = DenseFunctionals::new(&sys);
    let opts = SolverOptions::default().with_tol(1e-13);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in [
        MethodKind::LLStarInverse,
        MethodKind::TwoStage,
        MethodKind::SingleStage { omega: 1.0 },
        MethodKind::SingleStage { omega: 0.2 },
    ] {
        let sol = sys.solve(kind, &opts).unwrap();
        let v0 = sol.u.as_ref().unwrap().coeffs.clone();
        let j0 = dense.functional(kind, &v0);
        for _ in 0..200 {
            let scale = 10f64.powf(rng.gen_range(-4.0..0.0));
            let perturbed: Vec<f64> = v0
                .iter()
                .map(|c| c + scale * (rng.gen::<f64>() - 0.5))
                .collect();
            let j = dense.functional(kind, &perturbed);
            assert!(
                j0 <= j + 1e-12 * j0.abs().max(1.0),
                "{kind:?}: {j0} > {j} at scale {scale}"
            );
        }
    }
}

#[test]
fn saddle_solution_satisfies_the_reduced_equations() {
    let coeffs = paper_coeffs(1e4);
    let mesh = mesh(4, &coeffs);
    let (u, z) = spaces_p1_p2(&mesh);
    let sys = AssembledSystem::build(&u, &z, &coeffs, BoundaryTreatment::Weak).unwrap();
    let sol = sys
        .solve(MethodKind::LLStarInverse, &SolverOptions::default().with_tol(1e-13))
        .unwrap();
    let a = llstar::linalg::dense_schur_complement(&sys.l, &sys.h).unwrap();
    let hinv_r = sys.inner.solve(&sys.rhs).unwrap();
    let f = DVector::from_column_slice(&sys.l.matvec_transpose(&hinv_r));
    let au = &a * DVector::from_column_slice(&sol.u.as_ref().unwrap().coeffs);
    let worst = (au - &f).amax();
    assert!(worst <= 1e-8 * f.amax().max(1.0), "residual {worst}");
}

#[test]
fn two_stage_equals_the_dense_mass_projection_of_the_adjoint_image() {
    let coeffs = paper_coeffs(10.0);
    let mesh = mesh(4, &coeffs);
    let (u, z) = spaces_p1_p2(&mesh);
    let sys = AssembledSystem::build(&u, &z, &coeffs, BoundaryTreatment::Weak).unwrap();
    let ts = sys.solve(MethodKind::TwoStage, &SolverOptions::default()).unwrap();

    // Dense route: project the adjoint image onto the trial space with
    // quadrature for the load and a dense mass solve.
    let star = sys.solve(MethodKind::LLStar, &SolverOptions::default()).unwrap();
    let field = sys.adjoint_field(&star).unwrap();
    let map = z.mesh.map_to_ancestor(&u.mesh).unwrap();
    let rule = quadrature_rule(8).unwrap();
    let mut load = vec![0.0; u.dim];
    for (tz, entry) in map.iter().enumerate() {
        let scale = 2.0 * z.mesh.triangle_area(tz);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let fv = field.eval(tz, *lam);
            let u_lam = llstar::mesh::bary_apply(&entry.1, *lam);
            let (uv, _) = u.eval_basis(entry.0, u_lam);
            for (j, &un) in u.element_dofs[entry.0].iter().enumerate() {
                if let Some(col) = u.reduced_index(un) {
                    load[col] += scale * w * fv * uv[j];
                }
            }
        }
    }
    let proj = dense_spd_solve(&sys.mass.to_dense(), &load).unwrap();
    let u_ts = &ts.u.as_ref().unwrap().coeffs;
    let worst = u_ts
        .iter()
        .zip(&proj)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-10, "projection gap {worst}");
}

#[test]
fn inclusion_case_collapses_two_stage_onto_the_adjoint_solve() {
    // Matrix-level realization of a trial space equal to the adjoint image:
    // the mixed matrix and both Gram matrices coincide with H, and the
    // two-stage projection returns the adjoint coefficients unchanged.
    let coeffs = paper_coeffs(10.0);
    let mesh = mesh(4, &coeffs);
    let z = build_space(&mesh, 2, SpaceConstraint::OutflowClosure).unwrap();
    let h = assemble_h(&z, &coeffs).unwrap();
    let rhs = assemble_rhs_weak(&z, &coeffs).unwrap();
    let inner = InnerSolver::direct(&h, None).unwrap();
    let star = solve_llstar(&inner, &z, &rhs).unwrap();
    let ts = solve_two_stage(&inner, &h, &h, &rhs, &z).unwrap();
    let worst = star
        .z
        .as_ref()
        .unwrap()
        .iter()
        .zip(&ts.u.as_ref().unwrap().coeffs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-10, "two-stage differs from the adjoint solve by {worst}");
}

#[test]
fn methods_coalesce_as_the_adjoint_mesh_refines() {
    let coeffs = paper_coeffs(10.0);
    let u_mesh = mesh(4, &coeffs);
    let u = build_space(&u_mesh, 1, SpaceConstraint::None).unwrap();
    let opts = SolverOptions::default().with_tol(1e-12);
    let mut z_mesh = Arc::clone(&u_mesh);
    let mut spreads = Vec::new();
    for level in 0..3 {
        if level > 0 {
            z_mesh = Arc::new(z_mesh.uniform_refine());
        }
        let z = build_space(&z_mesh, 2, SpaceConstraint::OutflowClosure).unwrap();
        let sys = AssembledSystem::build(&u, &z, &coeffs, BoundaryTreatment::Weak).unwrap();
        let solutions: Vec<Vec<f64>> = [
            MethodKind::LLStarInverse,
            MethodKind::TwoStage,
            MethodKind::SingleStage { omega: 1.0 },
        ]
        .iter()
        .map(|&k| sys.solve(k, &opts).unwrap().u.unwrap().coeffs)
        .collect();
        let mut spread: f64 = 0.0;
        for i in 0..solutions.len() {
            for j in i + 1..solutions.len() {
                let d: Vec<f64> = solutions[i]
                    .iter()
                    .zip(&solutions[j])
                    .map(|(a, b)| a - b)
                    .collect();
                spread = spread.max(llstar::analysis::mass_norm(&sys.mass, &d));
            }
        }
        spreads.push(spread);
    }
    for w in spreads.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-10),
            "pairwise spread grew under refinement: {spreads:?}"
        );
    }
    assert!(
        spreads.last().unwrap() < &(0.5 * spreads[0]),
        "spread did not shrink appreciably: {spreads:?}"
    );
}

#[test]
fn llstar_error_never_beats_other_image_space_elements() {
    let coeffs = paper_coeffs(10.0);
    let mesh = mesh(4, &coeffs);
    let (u, z) = spaces_p1_p2(&mesh);
    let sys = AssembledSystem::build(&u, &z, &coeffs, BoundaryTreatment::Weak).unwrap();
    let star = sys.solve(MethodKind::LLStar, &SolverOptions::default()).unwrap();
    let field = sys.adjoint_field(&star).unwrap();
    let best = llstar::analysis::l2_error(&field, &coeffs, 8).unwrap();
    let zc = star.z.as_ref().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let perturbed: Vec<f64> =
            zc.iter().map(|c| c + 0.02 * (rng.gen::<f64>() - 0.5)).collect();
        let pf = llstar::methods::AdjointImageField::new(
            Arc::clone(&z),
            perturbed,
            coeffs.clone(),
        );
        let err = llstar::analysis::l2_error(&pf, &coeffs, 8).unwrap();
        assert!(err + 1e-12 >= best, "perturbed image beat the projection");
    }
}
