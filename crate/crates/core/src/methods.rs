//! The four solution methods driven by the assembled matrices.
//!
//! * `LLStar`: solve `H z = r` on the adjoint space; the approximation is the
//!   adjoint image `L* z`, the best `L2` approximation in that image space.
//! * `TwoStage`: the `LLStar` solve followed by an `L2` projection onto the
//!   trial space (`M u = L^T H^{-1} r`).
//! * `SingleStage(omega)`: the SPD combined system solved with CG and the
//!   block preconditioner.
//! * `LLStarInverse`: the saddle-point system solved either with
//!   preconditioned GMRES on the block form or with CG on the reduced
//!   operator `L^T H^{-1} L` (mass preconditioned).

use crate::assembly::{assemble_h, assemble_l, assemble_mass, assemble_rhs_strong, assemble_rhs_weak};
use crate::linalg::{
    block_vector, cg, gmres, DiagonalOp, InnerSolver, PrecondSide, SaddleOp, SaddlePrecond,
    ScaledIdentity, SchurComplementOp, SingleStageOp, SingleStagePrecond, SolveReport,
    SparseMatrix,
};
use crate::mesh::BaryMap;
use crate::problem::{apply_operator, Coefficients, OperatorSide};
use crate::space::{FEFunction, FunctionSpace, MeshField};
use crate::{Error, Result};
use std::sync::Arc;

/// Which method produces the approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodKind {
    LLStar,
    TwoStage,
    SingleStage { omega: f64 },
    LLStarInverse,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::LLStar => "llstar",
            MethodKind::TwoStage => "two_stage",
            MethodKind::SingleStage { .. } => "single_stage",
            MethodKind::LLStarInverse => "llstar_inverse",
        }
    }

    pub fn parse(name: &str, omega: f64) -> Result<Self> {
        match name {
            "llstar" => Ok(MethodKind::LLStar),
            "two_stage" => Ok(MethodKind::TwoStage),
            "single_stage" => {
                if omega <= 0.0 || !omega.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "single-stage weight must be positive and finite, got {omega}"
                    )));
                }
                Ok(MethodKind::SingleStage { omega })
            }
            "llstar_inverse" => Ok(MethodKind::LLStarInverse),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Solver path for the saddle-point method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseSolverChoice {
    /// GMRES on the block system with the symmetric block preconditioner.
    BlockGmres,
    /// CG on the reduced operator with a mass preconditioner.
    SchurCg,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub restart: usize,
    pub maxit_gmres: usize,
    pub maxit_cg: usize,
    pub inverse_solver: InverseSolverChoice,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            restart: 30,
            maxit_gmres: 2000,
            maxit_cg: 500,
            inverse_solver: InverseSolverChoice::BlockGmres,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Result of one method solve. `u` is absent for the adjoint-only method;
/// `z` is absent for the two-stage method (its intermediate solve is not the
/// approximation).
#[derive(Debug, Clone)]
pub struct MethodSolution {
    pub kind: MethodKind,
    pub u: Option<FEFunction>,
    pub z: Option<Vec<f64>>,
    pub z_space: Option<Arc<FunctionSpace>>,
    pub report: SolveReport,
}

/// Pointwise-evaluable adjoint image `sum_i z_i (L* psi_i)`, optionally
/// shifted by a trial-space function (used for lifted boundary data). Lives
/// on the adjoint space's mesh and is discontinuous across its edges.
pub struct AdjointImageField {
    pub space: Arc<FunctionSpace>,
    pub z: Vec<f64>,
    pub coeffs: Coefficients,
    shift: Option<(FEFunction, Vec<(usize, BaryMap)>)>,
}

impl AdjointImageField {
    pub fn new(space: Arc<FunctionSpace>, z: Vec<f64>, coeffs: Coefficients) -> Self {
        AdjointImageField { space, z, coeffs, shift: None }
    }

    /// Adds a trial-space function on the same or an ancestor mesh.
    pub fn with_shift(mut self, shift: FEFunction) -> Result<Self> {
        let map = self
            .space
            .mesh
            .map_to_ancestor(&shift.space.mesh)
            .ok_or_else(|| Error::InvalidArgument("shift mesh is not an ancestor".into()))?;
        self.shift = Some((shift, map));
        Ok(self)
    }
}

impl MeshField for AdjointImageField {
    fn mesh(&self) -> &Arc<crate::mesh::Mesh> {
        &self.space.mesh
    }

    fn eval(&self, t: usize, lam: [f64; 3]) -> f64 {
        let adj = self.space.apply_adjoint_to_basis(&self.coeffs, t, lam);
        let mut value = 0.0;
        for (i, &node) in self.space.element_dofs[t].iter().enumerate() {
            if let Some(r) = self.space.reduced_index(node) {
                value += self.z[r] * adj[i];
            }
        }
        if let Some((shift, map)) = &self.shift {
            value += shift.eval_mapped(&map[t], lam);
        }
        value
    }
}

/// Adjoint least-squares solve `H z = rhs`.
pub fn solve_llstar(
    inner: &InnerSolver,
    z_space: &Arc<FunctionSpace>,
    rhs: &[f64],
) -> Result<MethodSolution> {
    let z = inner.solve(rhs)?;
    Ok(MethodSolution {
        kind: MethodKind::LLStar,
        u: None,
        z: Some(z),
        z_space: Some(Arc::clone(z_space)),
        report: SolveReport::direct(),
    })
}

/// Two-stage method: `M u = L^T H^{-1} rhs` with diagonally preconditioned CG.
pub fn solve_two_stage(
    inner: &InnerSolver,
    l: &SparseMatrix,
    mass: &SparseMatrix,
    rhs: &[f64],
    u_space: &Arc<FunctionSpace>,
) -> Result<MethodSolution> {
    let hinv = inner.solve(rhs)?;
    let f = l.matvec_transpose(&hinv);
    let jacobi = DiagonalOp::jacobi_of(mass);
    let (u, report) = cg(mass, &f, &jacobi, 1e-12, 10_000)?;
    if !report.converged {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            residual: *report.residual_history.last().unwrap_or(&f64::NAN),
        });
    }
    Ok(MethodSolution {
        kind: MethodKind::TwoStage,
        u: Some(FEFunction::new(Arc::clone(u_space), u)?),
        z: None,
        z_space: None,
        report,
    })
}

/// Single-stage combined system solved with preconditioned CG.
#[allow(clippy::too_many_arguments)]
pub fn solve_single_stage(
    h: &SparseMatrix,
    l: &SparseMatrix,
    mass: &SparseMatrix,
    rhs: &[f64],
    omega: f64,
    u_space: &Arc<FunctionSpace>,
    z_space: &Arc<FunctionSpace>,
    inner: &InnerSolver,
    opts: &SolverOptions,
) -> Result<MethodSolution> {
    if omega <= 0.0 || !omega.is_finite() {
        return Err(Error::InvalidArgument("single-stage weight must be positive".into()));
    }
    let op = SingleStageOp { h, l, mass, omega };
    let z_ss = ScaledIdentity { n: u_space.dim, scale: 1.0 };
    let precond = SingleStagePrecond { inner_b: inner, l, z_ss_apply: &z_ss, omega };
    let scaled_rhs: Vec<f64> = rhs.iter().map(|v| omega * v).collect();
    let block_rhs = block_vector(&scaled_rhs, &vec![0.0; u_space.dim]);
    let (xy, report) = cg(&op, &block_rhs, &precond, opts.tol, opts.maxit_cg)?;
    let (z, u) = xy.split_at(z_space.dim);
    Ok(MethodSolution {
        kind: MethodKind::SingleStage { omega },
        u: Some(FEFunction::new(Arc::clone(u_space), u.to_vec())?),
        z: Some(z.to_vec()),
        z_space: Some(Arc::clone(z_space)),
        report,
    })
}

/// Saddle-point method. Refuses configurations with `dim(U) > dim(Z)`, whose
/// reduced operator is provably singular.
#[allow(clippy::too_many_arguments)]
pub fn solve_llstar_inverse(
    h: &SparseMatrix,
    l: &SparseMatrix,
    mass: &SparseMatrix,
    rhs: &[f64],
    u_space: &Arc<FunctionSpace>,
    z_space: &Arc<FunctionSpace>,
    inner: &InnerSolver,
    opts: &SolverOptions,
) -> Result<MethodSolution> {
    if u_space.dim > z_space.dim {
        return Err(Error::MethodPrecondition(format!(
            "saddle-point method needs dim(Z) >= dim(U); got dim(U) = {} > dim(Z) = {}",
            u_space.dim, z_space.dim
        )));
    }
    match opts.inverse_solver {
        InverseSolverChoice::BlockGmres => {
            let op = SaddleOp { h, l };
            let z_inv = ScaledIdentity { n: u_space.dim, scale: -1.0 };
            let precond = SaddlePrecond { inner_b: inner, l, z_inv_apply: &z_inv };
            let block_rhs = block_vector(rhs, &vec![0.0; u_space.dim]);
            // Right preconditioning: the monitored quantity is the true
            // residual. The left-monitored variant declares convergence long
            // before the trial-space block is accurate for this indefinite
            // Schur preconditioner, so it is not used here.
            let (xy, report) = gmres(
                &op,
                &block_rhs,
                &precond,
                PrecondSide::Right,
                opts.restart,
                opts.tol,
                opts.maxit_gmres,
            )?;
            let (z, u) = xy.split_at(z_space.dim);
            Ok(MethodSolution {
                kind: MethodKind::LLStarInverse,
                u: Some(FEFunction::new(Arc::clone(u_space), u.to_vec())?),
                z: Some(z.to_vec()),
                z_space: Some(Arc::clone(z_space)),
                report,
            })
        }
        InverseSolverChoice::SchurCg => {
            let hinv_r = inner.solve(rhs)?;
            let f = l.matvec_transpose(&hinv_r);
            let schur = SchurComplementOp { l, inner };
            let mass_solver = InnerSolver::direct(mass, Some(&u_space.reduced_coords()))?;
            let (u, report) = cg(&schur, &f, &mass_solver, opts.tol, opts.maxit_cg)?;
            // Recover the adjoint block from the first saddle equation.
            let lu = l.matvec(&u);
            let resid: Vec<f64> = rhs.iter().zip(&lu).map(|(r, b)| r - b).collect();
            let z = inner.solve(&resid)?;
            Ok(MethodSolution {
                kind: MethodKind::LLStarInverse,
                u: Some(FEFunction::new(Arc::clone(u_space), u)?),
                z: Some(z),
                z_space: Some(Arc::clone(z_space)),
                report,
            })
        }
    }
}

/// How the inflow datum enters the discrete system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTreatment {
    /// Boundary integral on the right-hand side (the default path).
    Weak,
    /// Superposition: a lifting interpolant of the datum on the trial space,
    /// a volume-only right-hand side for the shifted problem, and the lift
    /// added back to trial-space solutions.
    Strong,
}

/// Assembled matrices, right-hand side, and the cached inner factorization
/// for one discretization; solves any of the four methods against them.
pub struct AssembledSystem {
    pub coeffs: Coefficients,
    pub u_space: Arc<FunctionSpace>,
    pub z_space: Arc<FunctionSpace>,
    pub l: SparseMatrix,
    pub h: SparseMatrix,
    pub mass: SparseMatrix,
    pub rhs: Vec<f64>,
    pub inner: InnerSolver,
    pub lift: Option<FEFunction>,
}

impl AssembledSystem {
    pub fn build(
        u_space: &Arc<FunctionSpace>,
        z_space: &Arc<FunctionSpace>,
        coeffs: &Coefficients,
        bc: BoundaryTreatment,
    ) -> Result<Self> {
        let l = assemble_l(u_space, z_space, coeffs)?;
        let h = assemble_h(z_space, coeffs)?;
        let mass = assemble_mass(u_space)?;
        let coords = z_space.reduced_coords();
        let inner = InnerSolver::direct(&h, Some(&coords))?;
        let (rhs, lift) = match bc {
            BoundaryTreatment::Weak => (assemble_rhs_weak(z_space, coeffs)?, None),
            BoundaryTreatment::Strong => {
                let lift = inflow_lift(u_space, coeffs);
                let rhs = lifted_rhs(z_space, coeffs, &lift)?;
                (rhs, Some(lift))
            }
        };
        Ok(AssembledSystem {
            coeffs: coeffs.clone(),
            u_space: Arc::clone(u_space),
            z_space: Arc::clone(z_space),
            l,
            h,
            mass,
            rhs,
            inner,
            lift,
        })
    }

    pub fn solve(&self, kind: MethodKind, opts: &SolverOptions) -> Result<MethodSolution> {
        let mut solution = match kind {
            MethodKind::LLStar => solve_llstar(&self.inner, &self.z_space, &self.rhs),
            MethodKind::TwoStage => {
                solve_two_stage(&self.inner, &self.l, &self.mass, &self.rhs, &self.u_space)
            }
            MethodKind::SingleStage { omega } => solve_single_stage(
                &self.h,
                &self.l,
                &self.mass,
                &self.rhs,
                omega,
                &self.u_space,
                &self.z_space,
                &self.inner,
                opts,
            ),
            MethodKind::LLStarInverse => solve_llstar_inverse(
                &self.h,
                &self.l,
                &self.mass,
                &self.rhs,
                &self.u_space,
                &self.z_space,
                &self.inner,
                opts,
            ),
        }?;
        // Strong boundary treatment solves the shifted problem; add the lift
        // back to trial-space approximations.
        if let (Some(lift), Some(u)) = (&self.lift, solution.u.as_mut()) {
            for (c, lc) in u.coeffs.iter_mut().zip(&lift.coeffs) {
                *c += lc;
            }
        }
        Ok(solution)
    }

    /// The adjoint-image field of a solution (plus lift under the strong
    /// boundary treatment).
    pub fn adjoint_field(&self, solution: &MethodSolution) -> Result<AdjointImageField> {
        let z = solution
            .z
            .clone()
            .ok_or_else(|| Error::InvalidArgument("solution carries no adjoint block".into()))?;
        let field = AdjointImageField::new(Arc::clone(&self.z_space), z, self.coeffs.clone());
        match (&self.lift, solution.kind) {
            (Some(lift), MethodKind::LLStar) => field.with_shift(lift.clone()),
            _ => Ok(field),
        }
    }
}

/// Trial-space interpolant equal to the inflow datum on the closed inflow
/// boundary and zero at every other node.
pub fn inflow_lift(u_space: &Arc<FunctionSpace>, coeffs: &Coefficients) -> FEFunction {
    let inflow = u_space.nodes_on_boundary(crate::mesh::BoundaryLabel::Inflow);
    let mut values = vec![0.0; u_space.dim];
    for node in inflow {
        if let Some(r) = u_space.reduced_index(node) {
            values[r] = coeffs.g;
        }
    }
    FEFunction { space: Arc::clone(u_space), coeffs: values }
}

/// Volume right-hand side of the lifted problem: `<r - L lift, psi_i>`.
fn lifted_rhs(
    z_space: &Arc<FunctionSpace>,
    coeffs: &Coefficients,
    lift: &FEFunction,
) -> Result<Vec<f64>> {
    let u_mesh = Arc::clone(&lift.space.mesh);
    assemble_rhs_strong(z_space, |p| {
        let (t, lam) = u_mesh.locate(p).expect("quadrature point inside the domain");
        let (value, grad) = lift.eval_with_grad(t, lam);
        let lg = apply_operator(OperatorSide::Primal, coeffs, value, grad, p);
        coeffs.source_at(p) - lg
    })
}
