//! Error measurement, empirical convergence orders, inf-sup diagnostics, and
//! spectral-equivalence checks.

use crate::linalg::{dense_generalized_eig, InnerSolver, SparseMatrix};
use crate::mesh::{bary_apply, BaryMap};
use crate::methods::MethodKind;
use crate::problem::{exact_solution, Coefficients, Point};
use crate::quadrature::{quadrature_rule, QuadratureRule, MAX_DEGREE};
use crate::space::{FEFunction, FunctionSpace, MeshField};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub h: f64,
    pub hbar: f64,
    pub dim_u: usize,
    pub dim_z: usize,
    pub method: MethodKind,
    pub l2_error: f64,
    pub eoc: Option<f64>,
    pub iterations: usize,
}

/// Stability diagnostic of a trial/adjoint space pair.
#[derive(Debug, Clone)]
pub struct InfSupReport {
    pub lambda_min: f64,
    /// Discrete coercivity constant, `sqrt(lambda_min)`.
    pub c_i: f64,
    /// `sqrt(1 - lambda_min)`: the largest relative projection defect.
    pub supinf: f64,
    /// The same supremum measured independently over probe vectors.
    pub probe_sup: f64,
    pub dim_u: usize,
    pub dim_z: usize,
}

/// Barycentric corner maps of the four congruent children of a triangle.
const CHILD_MAPS: [BaryMap; 4] = [
    [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
    [[0.0, 1.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.5, 0.0]],
    [[0.0, 0.0, 1.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]],
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
];

/// Downstream rays from the two corners of the absorbing square that graze
/// the flow; the exponential layers sit along them.
pub fn layer_segments(coeffs: &Coefficients) -> Vec<[Point; 2]> {
    let r = &coeffs.omega_in;
    let b = coeffs.b;
    if b[0] == 0.0 || b[1] == 0.0 {
        return Vec::new();
    }
    let corners = if b[0] * b[1] > 0.0 {
        [[r.x0, r.y1], [r.x1, r.y0]]
    } else {
        [[r.x0, r.y0], [r.x1, r.y1]]
    };
    corners
        .iter()
        .map(|&c| {
            let mut t = f64::INFINITY;
            for axis in 0..2 {
                if b[axis] > 0.0 {
                    t = t.min((1.0 - c[axis]) / b[axis]);
                } else if b[axis] < 0.0 {
                    t = t.min((0.0 - c[axis]) / b[axis]);
                }
            }
            [c, [c[0] + t * b[0], c[1] + t * b[1]]]
        })
        .collect()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(p: [Point; 2], q: [Point; 2]) -> bool {
    let d1 = orient(q[0], q[1], p[0]);
    let d2 = orient(q[0], q[1], p[1]);
    let d3 = orient(p[0], p[1], q[0]);
    let d4 = orient(p[0], p[1], q[1]);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, a: Point, b: Point, c: Point| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(d1, q[0], q[1], p[0])
        || on(d2, q[0], q[1], p[1])
        || on(d3, p[0], p[1], q[0])
        || on(d4, p[0], p[1], q[1])
}

fn point_in_triangle(p: Point, tri: &[Point; 3]) -> bool {
    let d0 = orient(tri[0], tri[1], p);
    let d1 = orient(tri[1], tri[2], p);
    let d2 = orient(tri[2], tri[0], p);
    d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0
}

fn triangle_cut_by(tri: &[Point; 3], seg: &[Point; 2]) -> bool {
    if point_in_triangle(seg[0], tri) || point_in_triangle(seg[1], tri) {
        return true;
    }
    for k in 0..3 {
        if segments_intersect(*seg, [tri[k], tri[(k + 1) % 3]]) {
            return true;
        }
    }
    false
}

fn point_segment_distance(p: Point, seg: &[Point; 2]) -> f64 {
    let d = [seg[1][0] - seg[0][0], seg[1][1] - seg[0][1]];
    let w = [p[0] - seg[0][0], p[1] - seg[0][1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { ((w[0] * d[0] + w[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let proj = [seg[0][0] + t * d[0], seg[0][1] + t * d[1]];
    ((p[0] - proj[0]).powi(2) + (p[1] - proj[1]).powi(2)).sqrt()
}

fn element_sum_squared<F: MeshField + ?Sized>(
    field: &F,
    coeffs: &Coefficients,
    t: usize,
    rule: &QuadratureRule,
    split: bool,
) -> Result<f64> {
    let mesh = field.mesh();
    let area2 = 2.0 * mesh.triangle_area(t);
    let mut acc = 0.0;
    if split {
        for child in &CHILD_MAPS {
            for (lam, w) in rule.points.iter().zip(&rule.weights) {
                let parent_lam = bary_apply(child, *lam);
                let p = mesh.point_at(t, parent_lam);
                let diff = field.eval(t, parent_lam) - exact_solution(coeffs, p)?;
                acc += 0.25 * area2 * w * diff * diff;
            }
        }
    } else {
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let p = mesh.point_at(t, *lam);
            let diff = field.eval(t, *lam) - exact_solution(coeffs, p)?;
            acc += area2 * w * diff * diff;
        }
    }
    Ok(acc)
}

/// `L2` distance between a field and the exact characteristic solution.
/// Elements cut by the layer rays are integrated on one midpoint subdivision
/// to keep the oracle's quadrature error below the discretization error.
pub fn l2_error<F: MeshField + ?Sized>(
    field: &F,
    coeffs: &Coefficients,
    quad_degree: usize,
) -> Result<f64> {
    let rule = quadrature_rule(quad_degree.clamp(1, MAX_DEGREE))?;
    let segments = layer_segments(coeffs);
    let mesh = Arc::clone(field.mesh());
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle_vertices(t);
        let split = segments.iter().any(|seg| triangle_cut_by(&tri, seg));
        total += element_sum_squared(field, coeffs, t, &rule, split)?;
    }
    Ok(total.sqrt())
}

/// `L2` error restricted to elements farther than `margin` from every layer
/// ray (all three vertices clear the margin).
pub fn l2_error_away_from_layers<F: MeshField + ?Sized>(
    field: &F,
    coeffs: &Coefficients,
    quad_degree: usize,
    margin: f64,
) -> Result<f64> {
    let rule = quadrature_rule(quad_degree.clamp(1, MAX_DEGREE))?;
    let segments = layer_segments(coeffs);
    let mesh = Arc::clone(field.mesh());
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle_vertices(t);
        let near = segments.iter().any(|seg| {
            tri.iter().any(|&v| point_segment_distance(v, seg) < margin)
        });
        if !near {
            total += element_sum_squared(field, coeffs, t, &rule, false)?;
        }
    }
    Ok(total.sqrt())
}

/// `L2` norm of a field via element quadrature.
pub fn l2_norm<F: MeshField + ?Sized>(field: &F, quad_degree: usize) -> Result<f64> {
    let rule = quadrature_rule(quad_degree.clamp(1, MAX_DEGREE))?;
    let mesh = Arc::clone(field.mesh());
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let area2 = 2.0 * mesh.triangle_area(t);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let v = field.eval(t, *lam);
            total += area2 * w * v * v;
        }
    }
    Ok(total.sqrt())
}

/// Empirical orders of convergence `log(e_prev/e_cur) / log(h_prev/h_cur)`.
/// Exact reproduction (a zero error) is reported as an infinite rate.
pub fn compute_eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(
            "need equally many errors and mesh sizes, at least two".into(),
        ));
    }
    if hs.iter().any(|&h| h <= 0.0) || errors.iter().any(|&e| e < 0.0) {
        return Err(Error::InvalidArgument("mesh sizes must be positive, errors nonnegative".into()));
    }
    let mut rates = Vec::with_capacity(errors.len() - 1);
    for i in 1..errors.len() {
        let rate = if errors[i] == 0.0 {
            f64::INFINITY
        } else if errors[i - 1] == 0.0 {
            f64::NEG_INFINITY
        } else {
            (errors[i - 1] / errors[i]).ln() / (hs[i - 1] / hs[i]).ln()
        };
        rates.push(rate);
    }
    Ok(rates)
}

fn reduced_dense(
    l: &SparseMatrix,
    h: &SparseMatrix,
    mass: &SparseMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>, InnerSolver)> {
    let inner = InnerSolver::direct(h, None)?;
    let n = l.ncols();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e[col] = 1.0;
        let lv = l.matvec(&e);
        let hinv = inner.solve(&lv)?;
        let acol = l.matvec_transpose(&hinv);
        for row in 0..n {
            a[(row, col)] = acol[row];
        }
        e[col] = 0.0;
    }
    let a = (&a + &a.transpose()) * 0.5;
    Ok((a, mass.to_dense(), inner))
}

/// Projection defect ratio `||v - P v|| / ||v||` computed through linear
/// solves with `H` (no eigensolver involved).
fn projection_defect(
    l: &SparseMatrix,
    inner: &InnerSolver,
    m_dense: &DMatrix<f64>,
    v: &[f64],
) -> f64 {
    let lv = l.matvec(v);
    let z = inner.solve(&lv).unwrap_or_else(|_| vec![0.0; lv.len()]);
    let pa: f64 = lv.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    let vd = DVector::from_column_slice(v);
    let pm = (m_dense * &vd).dot(&vd);
    if pm <= 0.0 {
        return 0.0;
    }
    ((1.0 - pa / pm).max(0.0)).sqrt()
}

/// Dense inf-sup diagnostic of a space pair through the assembled matrices.
///
/// Solves the generalized eigenproblem of the reduced operator against the
/// mass matrix and cross-checks the resulting defect bound with probe vectors
/// evaluated through an independent solve-based route.
pub fn infsup_diagnostic(
    l: &SparseMatrix,
    h: &SparseMatrix,
    mass: &SparseMatrix,
) -> Result<InfSupReport> {
    let (a, m, inner) = reduced_dense(l, h, mass)?;
    let n = a.nrows();
    let (vals, vecs) = dense_generalized_eig(&a, &m)?;
    let lambda_min = vals[0];
    let c_i = lambda_min.max(0.0).sqrt();
    let supinf = (1.0 - lambda_min).max(0.0).sqrt();

    let mut probe_sup: f64 = 0.0;
    let mut probe = |v: &[f64]| {
        let d = projection_defect(l, &inner, &m, v);
        if d > probe_sup {
            probe_sup = d;
        }
    };
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        probe(&e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..500 {
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        probe(&v);
    }
    // The minimizing eigenvector attains the supremum.
    let v0: Vec<f64> = vecs.column(0).iter().copied().collect();
    probe(&v0);

    if probe_sup > supinf + 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "projection-defect probes exceed the spectral bound: {probe_sup} > {supinf}"
        )));
    }
    Ok(InfSupReport {
        lambda_min,
        c_i,
        supinf,
        probe_sup,
        dim_u: l.ncols(),
        dim_z: l.nrows(),
    })
}

/// Worst signed violation of the two-sided spectral bound
/// `c_I^2 v^T M v <= v^T A v <= v^T M v` over random probes normalized in
/// the `M` inner product. Nonpositive results mean the bound holds.
pub fn spectral_sandwich_check(
    l: &SparseMatrix,
    h: &SparseMatrix,
    mass: &SparseMatrix,
    trials: usize,
) -> Result<f64> {
    let (a, m, _) = reduced_dense(l, h, mass)?;
    let (vals, _) = dense_generalized_eig(&a, &m)?;
    let c2 = vals[0].max(0.0);
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11ce);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        let vm = (&m * &v).dot(&v);
        if vm <= 0.0 {
            continue;
        }
        let v = v / vm.sqrt();
        let va = (&a * &v).dot(&v);
        let vm = (&m * &v).dot(&v);
        worst = worst.max(c2 * vm - va).max(va - vm);
    }
    Ok(worst)
}

/// `sqrt(v^T M v)`.
pub fn mass_norm(mass: &SparseMatrix, v: &[f64]) -> f64 {
    let mv = mass.matvec(v);
    v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// `M`-norm of the coefficient difference of two functions on one space.
pub fn fe_distance(mass: &SparseMatrix, a: &FEFunction, b: &FEFunction) -> f64 {
    let d: Vec<f64> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    mass_norm(mass, &d)
}

/// `L2`-orthogonal projection of the exact solution onto a space, with the
/// load vector integrated adaptively so layer kinks do not pollute it.
pub fn project_exact_solution(
    u_space: &Arc<FunctionSpace>,
    coeffs: &Coefficients,
    mass: &SparseMatrix,
) -> Result<FEFunction> {
    let rule = quadrature_rule((2 * u_space.order + 2).min(MAX_DEGREE))?;
    let nloc = u_space.local_dofs();
    let mesh = &u_space.mesh;
    let mut rhs = vec![0.0; u_space.dim];
    let mut element = vec![0.0; nloc];
    for t in 0..mesh.num_triangles() {
        element.fill(0.0);
        let scale = 2.0 * mesh.triangle_area(t);
        adaptive_element_load(
            u_space,
            coeffs,
            t,
            &crate::mesh::BARY_IDENTITY,
            scale,
            &rule,
            0,
            14,
            1e-13,
            &mut element,
        )?;
        for (i, &node) in u_space.element_dofs[t].iter().enumerate() {
            if let Some(r) = u_space.reduced_index(node) {
                rhs[r] += element[i];
            }
        }
    }
    let solver = InnerSolver::direct(mass, Some(&u_space.reduced_coords()))?;
    let coeffs_vec = solver.solve(&rhs)?;
    FEFunction::new(Arc::clone(u_space), coeffs_vec)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_element_load(
    space: &FunctionSpace,
    coeffs: &Coefficients,
    t: usize,
    map: &BaryMap,
    scale: f64,
    rule: &QuadratureRule,
    depth: usize,
    max_depth: usize,
    tol: f64,
    out: &mut [f64],
) -> Result<()> {
    let nloc = space.local_dofs();
    let eval_on = |m: &BaryMap, acc: &mut [f64]| -> Result<()> {
        let mut vals = vec![0.0; nloc];
        let mut grads = vec![[0.0; 2]; nloc];
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let parent = bary_apply(m, *lam);
            let p = space.mesh.point_at(t, parent);
            let u = exact_solution(coeffs, p)?;
            space.eval_basis_into(t, parent, &mut vals, &mut grads);
            for i in 0..nloc {
                acc[i] += scale * w * u * vals[i];
            }
        }
        Ok(())
    };
    let mut whole = vec![0.0; nloc];
    eval_on(map, &mut whole)?;
    let mut children = vec![0.0; nloc];
    let child_maps: Vec<BaryMap> =
        CHILD_MAPS.iter().map(|c| compose_maps(map, c)).collect();
    {
        let quarter = scale * 0.25;
        let mut vals = vec![0.0; nloc];
        let mut grads = vec![[0.0; 2]; nloc];
        for cm in &child_maps {
            for (lam, w) in rule.points.iter().zip(&rule.weights) {
                let parent = bary_apply(cm, *lam);
                let p = space.mesh.point_at(t, parent);
                let u = exact_solution(coeffs, p)?;
                space.eval_basis_into(t, parent, &mut vals, &mut grads);
                for i in 0..nloc {
                    children[i] += quarter * w * u * vals[i];
                }
            }
        }
    }
    let diff = whole
        .iter()
        .zip(&children)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if diff <= tol || depth >= max_depth {
        for i in 0..nloc {
            out[i] += children[i];
        }
        return Ok(());
    }
    for cm in &child_maps {
        adaptive_element_load(
            space,
            coeffs,
            t,
            cm,
            scale * 0.25,
            rule,
            depth + 1,
            max_depth,
            tol / 4.0,
            out,
        )?;
    }
    Ok(())
}

fn compose_maps(outer: &BaryMap, inner: &BaryMap) -> BaryMap {
    let mut out = [[0.0; 3]; 3];
    for j in 0..3 {
        out[j] = bary_apply(outer, inner[j]);
    }
    out
}
