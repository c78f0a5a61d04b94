//! Config-driven study runner: convergence tables, solver iteration tables,
//! and inf-sup diagnostics, each emitted as CSV.

use llstar::analysis::{compute_eoc, infsup_diagnostic, l2_error};
use llstar::mesh::{generate_square_mesh, Mesh};
use llstar::methods::{
    AssembledSystem, BoundaryTreatment, MethodKind, MethodSolution, SolverOptions,
};
use llstar::problem::Coefficients;
use llstar::space::{build_space, FunctionSpace, SpaceConstraint};
use llstar::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const DEFAULT_ALPHA: f64 = 3.0 * std::f64::consts::PI / 16.0;
pub const MESH_JITTER: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Convergence,
    SolverIterations,
    InfSup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZMeshPolicy {
    Same,
    Refined,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub methods: Vec<MethodKind>,
    pub sigma_in: f64,
    pub sigma_out: f64,
    pub alpha: f64,
    pub order_u: usize,
    pub order_z: usize,
    pub z_mesh: ZMeshPolicy,
    pub levels: Vec<usize>,
    pub omega: f64,
    pub bc: BoundaryTreatment,
    pub tol: f64,
    pub restart: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Opt-in concurrent method solves within a level.
    pub parallel: bool,
}

impl StudyConfig {
    fn defaults(study: StudyKind) -> Self {
        let output = match study {
            StudyKind::Convergence => "convergence.csv",
            StudyKind::SolverIterations => "solver.csv",
            StudyKind::InfSup => "infsup.csv",
        };
        StudyConfig {
            study,
            methods: vec![
                MethodKind::LLStarInverse,
                MethodKind::LLStar,
                MethodKind::TwoStage,
                MethodKind::SingleStage { omega: 1.0 },
            ],
            sigma_in: 1e4,
            sigma_out: 1e-4,
            alpha: DEFAULT_ALPHA,
            order_u: 1,
            order_z: 2,
            z_mesh: ZMeshPolicy::Same,
            levels: vec![8, 16, 32, 64, 128],
            omega: 1.0,
            bc: BoundaryTreatment::Weak,
            tol: 1e-6,
            restart: 30,
            seed: 7,
            output: output.into(),
            parallel: false,
        }
    }

    /// Parses the flat `key = value` format. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<StudyConfig> {
        let mut study = None;
        let mut fields: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key == "study" {
                study = Some(match value.as_str() {
                    "convergence" => StudyKind::Convergence,
                    "solver_iterations" => StudyKind::SolverIterations,
                    "infsup" => StudyKind::InfSup,
                    other => {
                        return Err(Error::Parse(format!("unknown study '{other}'")));
                    }
                });
            } else {
                fields.push((key, value));
            }
        }
        let study = study.ok_or_else(|| Error::Parse("missing required key 'study'".into()))?;
        let mut cfg = StudyConfig::defaults(study);
        let mut method_names: Option<Vec<String>> = None;
        for (key, value) in fields {
            match key.as_str() {
                "methods" => {
                    method_names =
                        Some(value.split(',').map(|s| s.trim().to_string()).collect());
                }
                "sigma_in" => cfg.sigma_in = parse_f64(&key, &value)?,
                "sigma_out" => cfg.sigma_out = parse_f64(&key, &value)?,
                "alpha" => cfg.alpha = parse_f64(&key, &value)?,
                "order_u" => cfg.order_u = parse_usize(&key, &value)?,
                "order_z" => cfg.order_z = parse_usize(&key, &value)?,
                "z_mesh" => {
                    cfg.z_mesh = match value.as_str() {
                        "same" => ZMeshPolicy::Same,
                        "refined" => ZMeshPolicy::Refined,
                        other => {
                            return Err(Error::Parse(format!("unknown z_mesh '{other}'")));
                        }
                    }
                }
                "levels" => {
                    cfg.levels = value
                        .split(',')
                        .map(|s| parse_usize("levels", s.trim()))
                        .collect::<Result<_>>()?;
                }
                "omega" => cfg.omega = parse_f64(&key, &value)?,
                "bc" => {
                    cfg.bc = match value.as_str() {
                        "weak" => BoundaryTreatment::Weak,
                        "strong" => BoundaryTreatment::Strong,
                        other => return Err(Error::Parse(format!("unknown bc '{other}'"))),
                    }
                }
                "tol" => cfg.tol = parse_f64(&key, &value)?,
                "restart" => cfg.restart = parse_usize(&key, &value)?,
                "seed" => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|_| Error::Parse(format!("invalid seed '{value}'")))?;
                }
                "output" => cfg.output = PathBuf::from(value),
                other => {
                    return Err(Error::Parse(format!("unknown configuration key '{other}'")));
                }
            }
        }
        if let Some(names) = method_names {
            cfg.methods = names
                .iter()
                .map(|n| MethodKind::parse(n, cfg.omega))
                .collect::<Result<_>>()?;
        } else {
            cfg.methods = vec![
                MethodKind::LLStarInverse,
                MethodKind::LLStar,
                MethodKind::TwoStage,
                MethodKind::SingleStage { omega: cfg.omega },
            ];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<StudyConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidArgument("levels must not be empty".into()));
        }
        for &n in &self.levels {
            if n < 4 || n % 4 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "level {n} is not a positive multiple of 4"
                )));
            }
        }
        if self.methods.iter().any(|m| matches!(m, MethodKind::LLStarInverse)) {
            for &n in &self.levels {
                let (dim_u, dim_z) = self.level_dims(n);
                if dim_z <= dim_u {
                    return Err(Error::InvalidArgument(format!(
                        "saddle-point method infeasible at level {n}: dim(U) = {dim_u} >= dim(Z) = {dim_z}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Dimension counting formulas for the structured triangulation.
    pub fn level_dims(&self, n: usize) -> (usize, usize) {
        let dim_u = lagrange_dim(n, self.order_u);
        let nz = match self.z_mesh {
            ZMeshPolicy::Same => n,
            ZMeshPolicy::Refined => 2 * n,
        };
        let dim_z = lagrange_dim(nz, self.order_z) - outflow_closure_nodes(nz, self.order_z);
        (dim_u, dim_z)
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            restart: self.restart,
            ..SolverOptions::default()
        }
    }

    fn coefficients(&self) -> Result<Coefficients> {
        Coefficients::new(self.alpha, self.sigma_in, self.sigma_out)
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid number for '{key}': '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("invalid integer for '{key}': '{value}'")))
}

/// Unconstrained Lagrange dimension on the structured n x n triangulation.
pub fn lagrange_dim(n: usize, order: usize) -> usize {
    let vertices = (n + 1) * (n + 1);
    let edges = 3 * n * n + 2 * n;
    let triangles = 2 * n * n;
    vertices + (order - 1) * edges + (order - 1) * order.saturating_sub(2) / 2 * triangles
}

/// Nodes removed by the outflow-closure constraint (east + north boundary).
pub fn outflow_closure_nodes(n: usize, order: usize) -> usize {
    2 * n * order + 1
}

struct LevelSetup {
    u_space: Arc<FunctionSpace>,
    z_space: Arc<FunctionSpace>,
    system: AssembledSystem,
    h: f64,
    hbar: f64,
}

fn build_level(cfg: &StudyConfig, n: usize) -> Result<LevelSetup> {
    let coeffs = cfg.coefficients()?;
    let u_mesh = Arc::new(generate_square_mesh(n, MESH_JITTER, cfg.seed, &coeffs)?);
    let z_mesh: Arc<Mesh> = match cfg.z_mesh {
        ZMeshPolicy::Same => Arc::clone(&u_mesh),
        ZMeshPolicy::Refined => Arc::new(u_mesh.uniform_refine()),
    };
    let u_space = build_space(&u_mesh, cfg.order_u, SpaceConstraint::None)?;
    let z_space = build_space(&z_mesh, cfg.order_z, SpaceConstraint::OutflowClosure)?;
    let system = AssembledSystem::build(&u_space, &z_space, &coeffs, cfg.bc)?;
    Ok(LevelSetup { u_space, z_space, h: u_mesh.h, hbar: z_mesh.h, system })
}

/// One emitted row of the convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub hbar: f64,
    pub dim_u: usize,
    pub dim_z: usize,
    pub method: MethodKind,
    pub error: Option<f64>,
    pub eoc: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
}

pub struct StudyOutcome {
    pub csv: String,
    pub all_ok: bool,
}

fn solve_level_methods(
    cfg: &StudyConfig,
    setup: &LevelSetup,
) -> Vec<Result<MethodSolution>> {
    let opts = cfg.solver_options();
    if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .methods
                .iter()
                .map(|kind| {
                    let sys = &setup.system;
                    let opts = opts.clone();
                    let kind = *kind;
                    scope.spawn(move || sys.solve(kind, &opts))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
        })
    } else {
        cfg.methods.iter().map(|kind| setup.system.solve(*kind, &opts)).collect()
    }
}

/// Runs the convergence study and renders the CSV.
pub fn run_convergence(cfg: &StudyConfig) -> Result<(Vec<ConvergenceRow>, StudyOutcome)> {
    let coeffs = cfg.coefficients()?;
    let quad_degree = (2 * cfg.order_z + 4).min(llstar::quadrature::MAX_DEGREE);
    let mut rows = Vec::new();
    let mut prev_error: Vec<Option<(f64, f64)>> = vec![None; cfg.methods.len()];
    for (level, &n) in cfg.levels.iter().enumerate() {
        match build_level(cfg, n) {
            Ok(setup) => {
                let solutions = solve_level_methods(cfg, &setup);
                for ((k, kind), solution) in cfg.methods.iter().enumerate().zip(&solutions) {
                    let mut row = ConvergenceRow {
                        level,
                        h: setup.h,
                        hbar: setup.hbar,
                        dim_u: setup.u_space.dim,
                        dim_z: setup.z_space.dim,
                        method: *kind,
                        error: None,
                        eoc: None,
                        iterations: None,
                        status: "ok".into(),
                    };
                    match solution {
                        Ok(sol) if sol.report.converged => {
                            let err = match kind {
                                MethodKind::LLStar => {
                                    let field = setup.system.adjoint_field(sol)?;
                                    l2_error(&field, &coeffs, quad_degree)?
                                }
                                _ => l2_error(
                                    sol.u.as_ref().expect("trial-space solution"),
                                    &coeffs,
                                    quad_degree,
                                )?,
                            };
                            row.error = Some(err);
                            row.iterations = Some(sol.report.iterations);
                            if let Some((ph, pe)) = prev_error[k] {
                                row.eoc = compute_eoc(&[pe, err], &[ph, setup.h])
                                    .ok()
                                    .map(|r| r[0]);
                            }
                            prev_error[k] = Some((setup.h, err));
                        }
                        Ok(sol) => {
                            row.status = "failed".into();
                            row.iterations = Some(sol.report.iterations);
                            prev_error[k] = None;
                        }
                        Err(e) => {
                            row.status = format!("failed: {e}").replace(',', ";");
                            prev_error[k] = None;
                        }
                    }
                    rows.push(row);
                }
            }
            Err(e) => {
                let (dim_u, dim_z) = cfg.level_dims(n);
                for kind in &cfg.methods {
                    rows.push(ConvergenceRow {
                        level,
                        h: f64::NAN,
                        hbar: f64::NAN,
                        dim_u,
                        dim_z,
                        method: *kind,
                        error: None,
                        eoc: None,
                        iterations: None,
                        status: format!("failed: {e}").replace(',', ";"),
                    });
                }
                prev_error.iter_mut().for_each(|p| *p = None);
            }
        }
    }
    let mut csv = String::from("level,h,hbar,dimU,dimZ,method,error,eoc,iterations,status\n");
    for row in &rows {
        let error = row.error.map(|e| format!("{e:.12e}")).unwrap_or_default();
        let eoc = row.eoc.map(|e| format!("{e:.4}")).unwrap_or_default();
        let iters = row.iterations.map(|i| i.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{:.6e},{:.6e},{},{},{},{},{},{},{}",
            row.level,
            row.h,
            row.hbar,
            row.dim_u,
            row.dim_z,
            row.method.name(),
            error,
            eoc,
            iters,
            row.status
        );
    }
    let all_ok = rows.iter().all(|r| r.status == "ok");
    Ok((rows, StudyOutcome { csv, all_ok }))
}

/// One emitted row of the solver-iteration study.
#[derive(Debug, Clone)]
pub struct SolverRow {
    pub h: f64,
    pub hbar: f64,
    pub dim_u: usize,
    pub dim_z: usize,
    pub iters_inv: usize,
    pub inv_converged: bool,
    pub iters_ss: usize,
    pub ss_converged: bool,
}

/// Runs the preconditioned-solver study: saddle-point GMRES(restart) and
/// single-stage CG per level.
pub fn run_solver_study(cfg: &StudyConfig) -> Result<(Vec<SolverRow>, StudyOutcome)> {
    let opts = cfg.solver_options();
    let mut rows = Vec::new();
    let mut all_ok = true;
    for &n in &cfg.levels {
        let setup = build_level(cfg, n)?;
        let inv = setup.system.solve(MethodKind::LLStarInverse, &opts)?;
        let ss = setup
            .system
            .solve(MethodKind::SingleStage { omega: cfg.omega }, &opts)?;
        if !inv.report.converged {
            eprintln!(
                "warning: saddle-point GMRES unconverged at level {n} after {} iterations",
                inv.report.iterations
            );
        }
        if !ss.report.converged {
            eprintln!(
                "warning: single-stage CG unconverged at level {n} after {} iterations",
                ss.report.iterations
            );
        }
        all_ok &= inv.report.converged && ss.report.converged;
        rows.push(SolverRow {
            h: setup.h,
            hbar: setup.hbar,
            dim_u: setup.u_space.dim,
            dim_z: setup.z_space.dim,
            iters_inv: inv.report.iterations,
            inv_converged: inv.report.converged,
            iters_ss: ss.report.iterations,
            ss_converged: ss.report.converged,
        });
    }
    let mut csv = String::from("h,hbar,dimU,dimZ,iters_inv,iters_ss\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{:.6e},{:.6e},{},{},{},{}",
            row.h, row.hbar, row.dim_u, row.dim_z, row.iters_inv, row.iters_ss
        );
    }
    Ok((rows, StudyOutcome { csv, all_ok }))
}

/// One emitted row of the inf-sup study.
#[derive(Debug, Clone)]
pub struct InfSupRow {
    pub level: usize,
    pub h: f64,
    pub hbar: f64,
    pub dim_u: usize,
    pub dim_z: usize,
    pub lambda_min: f64,
    pub c_i: f64,
    pub supinf: f64,
}

/// Dense-diagnostic size cap on the trial dimension.
pub const INFSUP_DIM_CAP: usize = 4000;

pub fn run_infsup(cfg: &StudyConfig) -> Result<(Vec<InfSupRow>, StudyOutcome)> {
    let mut rows = Vec::new();
    let mut all_ok = true;
    for (level, &n) in cfg.levels.iter().enumerate() {
        let (dim_u, _) = cfg.level_dims(n);
        if dim_u > INFSUP_DIM_CAP {
            eprintln!(
                "notice: level {n} skipped, dim(U) = {dim_u} exceeds the dense cap {INFSUP_DIM_CAP}"
            );
            all_ok = false;
            continue;
        }
        let setup = build_level(cfg, n)?;
        let report = infsup_diagnostic(&setup.system.l, &setup.system.h, &setup.system.mass)?;
        rows.push(InfSupRow {
            level,
            h: setup.h,
            hbar: setup.hbar,
            dim_u: setup.u_space.dim,
            dim_z: setup.z_space.dim,
            lambda_min: report.lambda_min,
            c_i: report.c_i,
            supinf: report.supinf,
        });
    }
    let mut csv = String::from("level,h,hbar,dimU,dimZ,lambda_min,c_I,supinf\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{:.6e},{:.6e},{},{},{:.12e},{:.12e},{:.12e}",
            row.level, row.h, row.hbar, row.dim_u, row.dim_z, row.lambda_min, row.c_i, row.supinf
        );
    }
    Ok((rows, StudyOutcome { csv, all_ok }))
}

/// Runs the configured study, writes the CSV, and reports overall success.
pub fn run_study(cfg: &StudyConfig) -> Result<bool> {
    let outcome = match cfg.study {
        StudyKind::Convergence => run_convergence(cfg)?.1,
        StudyKind::SolverIterations => run_solver_study(cfg)?.1,
        StudyKind::InfSup => run_infsup(cfg)?.1,
    };
    std::fs::write(&cfg.output, outcome.csv.as_bytes())?;
    Ok(outcome.all_ok)
}
