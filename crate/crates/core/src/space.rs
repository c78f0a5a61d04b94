//! Continuous Lagrange finite element spaces of order 1 to 5 on a mesh,
//! with optional zero-trace constraints on the inflow or outflow boundary.
//!
//! Element nodes are equispaced barycentric lattice points; global degrees of
//! freedom are identified by coordinate hashing, which glues shared edge and
//! vertex nodes across neighboring triangles.

use crate::mesh::{bary_apply, BoundaryLabel, Mesh, RegionTag};
use crate::problem::{Coefficients, Point};
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::Arc;

pub const MAX_ORDER: usize = 5;

/// Zero-trace constraint applied to a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceConstraint {
    /// Unconstrained space.
    None,
    /// Zero trace on the closure of the outflow boundary (adjoint domain).
    OutflowClosure,
    /// Zero trace on the closure of the inflow boundary (primal domain).
    InflowClosure,
}

/// A continuous Lagrange space.
///
/// `dof_coords` and `element_dofs` cover all nodes; nodes in `constrained`
/// carry an enforced zero value and are excluded from the reduced numbering,
/// so `dim` counts the unconstrained nodes only.
#[derive(Debug)]
pub struct FunctionSpace {
    pub mesh: Arc<Mesh>,
    pub order: usize,
    pub dof_coords: Vec<Point>,
    pub element_dofs: Vec<Vec<usize>>,
    pub constrained: Vec<bool>,
    pub dim: usize,
    node_to_reduced: Vec<Option<usize>>,
    reduced_to_node: Vec<usize>,
    /// Barycentric multi-indices of the reference nodes, shared by all elements.
    local_nodes: Vec<[usize; 3]>,
}

/// Number of Lagrange nodes per triangle at a given order.
pub fn nodes_per_element(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

fn local_lattice(order: usize) -> Vec<[usize; 3]> {
    let mut nodes = Vec::with_capacity(nodes_per_element(order));
    for b in 0..=order {
        for c in 0..=(order - b) {
            nodes.push([order - b - c, b, c]);
        }
    }
    nodes
}

/// Builds a Lagrange space of the given order on `mesh`.
pub fn build_space(
    mesh: &Arc<Mesh>,
    order: usize,
    constraint: SpaceConstraint,
) -> Result<Arc<FunctionSpace>> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "polynomial order must lie in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let local_nodes = local_lattice(order);
    let kf = order as f64;

    // Global node identification by quantized coordinate hashing.
    let tol = 1e-12 * mesh.h.max(1e-6);
    let key_of = |p: Point| ((p[0] / tol).round() as i64, (p[1] / tol).round() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut dof_coords: Vec<Point> = Vec::new();
    let mut element_dofs = Vec::with_capacity(mesh.num_triangles());

    for t in 0..mesh.num_triangles() {
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let mut dofs = Vec::with_capacity(local_nodes.len());
        for &[a, b, c] in &local_nodes {
            let (af, bf, cf) = (a as f64, b as f64, c as f64);
            let p = [
                (af * p0[0] + bf * p1[0] + cf * p2[0]) / kf,
                (af * p0[1] + bf * p1[1] + cf * p2[1]) / kf,
            ];
            let (kx, ky) = key_of(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(cands) = buckets.get(&(kx + dx, ky + dy)) {
                        for &cand in cands {
                            let q = dof_coords[cand];
                            if (q[0] - p[0]).abs() <= tol && (q[1] - p[1]).abs() <= tol {
                                found = Some(cand);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let id = match found {
                Some(id) => id,
                None => {
                    let id = dof_coords.len();
                    dof_coords.push(p);
                    buckets.entry((kx, ky)).or_default().push(id);
                    id
                }
            };
            dofs.push(id);
        }
        element_dofs.push(dofs);
    }

    // Constrained nodes: all element nodes lying on a boundary edge with the
    // target label, endpoints included.
    let mut constrained = vec![false; dof_coords.len()];
    let target = match constraint {
        SpaceConstraint::None => None,
        SpaceConstraint::OutflowClosure => Some(BoundaryLabel::Outflow),
        SpaceConstraint::InflowClosure => Some(BoundaryLabel::Inflow),
    };
    if let Some(target) = target {
        let mut edge_owner: HashMap<[usize; 2], (usize, usize)> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = if u < v { [u, v] } else { [v, u] };
                edge_owner.entry(key).or_insert((t, k));
            }
        }
        for ([u, v], label) in &mesh.boundary_edges {
            if *label != target {
                continue;
            }
            let key = if u < v { [*u, *v] } else { [*v, *u] };
            let (t, k) = *edge_owner.get(&key).ok_or_else(|| {
                Error::InvalidMesh("boundary edge not found in any triangle".into())
            })?;
            let opposite = (k + 2) % 3;
            for (ln, &node) in local_nodes.iter().enumerate() {
                if node[opposite] == 0 {
                    constrained[element_dofs[t][ln]] = true;
                }
            }
        }
    }

    let mut node_to_reduced = vec![None; dof_coords.len()];
    let mut reduced_to_node = Vec::new();
    for (node, is_constrained) in constrained.iter().enumerate() {
        if !is_constrained {
            node_to_reduced[node] = Some(reduced_to_node.len());
            reduced_to_node.push(node);
        }
    }
    let dim = reduced_to_node.len();

    Ok(Arc::new(FunctionSpace {
        mesh: Arc::clone(mesh),
        order,
        dof_coords,
        element_dofs,
        constrained,
        dim,
        node_to_reduced,
        reduced_to_node,
        local_nodes,
    }))
}

impl FunctionSpace {
    pub fn num_nodes(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn local_dofs(&self) -> usize {
        self.local_nodes.len()
    }

    pub fn local_node_indices(&self) -> &[[usize; 3]] {
        &self.local_nodes
    }

    /// Reduced (solver) index of a global node, `None` when constrained.
    pub fn reduced_index(&self, node: usize) -> Option<usize> {
        self.node_to_reduced[node]
    }

    pub fn node_of_reduced(&self, reduced: usize) -> usize {
        self.reduced_to_node[reduced]
    }

    /// Coordinates of the unconstrained dofs in reduced order.
    pub fn reduced_coords(&self) -> Vec<Point> {
        self.reduced_to_node.iter().map(|&n| self.dof_coords[n]).collect()
    }

    /// Global node ids lying on the closure of the boundary edges carrying
    /// the given label.
    pub fn nodes_on_boundary(&self, label: BoundaryLabel) -> Vec<usize> {
        let mut edge_owner: HashMap<[usize; 2], (usize, usize)> = HashMap::new();
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = if u < v { [u, v] } else { [v, u] };
                edge_owner.entry(key).or_insert((t, k));
            }
        }
        let mut on = vec![false; self.dof_coords.len()];
        for ([u, v], l) in &self.mesh.boundary_edges {
            if *l != label {
                continue;
            }
            let key = if u < v { [*u, *v] } else { [*v, *u] };
            if let Some(&(t, k)) = edge_owner.get(&key) {
                let opposite = (k + 2) % 3;
                for (ln, node) in self.local_nodes.iter().enumerate() {
                    if node[opposite] == 0 {
                        on[self.element_dofs[t][ln]] = true;
                    }
                }
            }
        }
        on.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Values and physical gradients of all element basis functions at a
    /// barycentric point of triangle `t`.
    pub fn eval_basis(&self, t: usize, lam: [f64; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let n = self.local_dofs();
        let mut values = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        self.eval_basis_into(t, lam, &mut values, &mut grads);
        (values, grads)
    }

    /// In-place variant of [`FunctionSpace::eval_basis`] for assembly loops.
    pub fn eval_basis_into(
        &self,
        t: usize,
        lam: [f64; 3],
        values: &mut [f64],
        grads: &mut [[f64; 2]],
    ) {
        let k = self.order;
        let gl = self.mesh.grad_lambda(t);
        // One-dimensional factors P_a(lambda) = prod_{m<a} (k lambda - m)/(a - m)
        // and their lambda-derivatives, per barycentric direction.
        let mut factor = [[(0.0f64, 0.0f64); MAX_ORDER + 1]; 3];
        for dir in 0..3 {
            let mut value = 1.0;
            let mut deriv = 0.0;
            factor[dir][0] = (1.0, 0.0);
            for m in 0..k {
                let scale = 1.0 / (m as f64 + 1.0);
                let term = k as f64 * lam[dir] - m as f64;
                deriv = (deriv * term + value * k as f64) * scale;
                value = value * term * scale;
                factor[dir][m + 1] = (value, deriv);
            }
        }
        for (ln, &[a, b, c]) in self.local_nodes.iter().enumerate() {
            let (pa, da) = factor[0][a];
            let (pb, db) = factor[1][b];
            let (pc, dc) = factor[2][c];
            values[ln] = pa * pb * pc;
            let dl = [da * pb * pc, pa * db * pc, pa * pb * dc];
            grads[ln] = [
                dl[0] * gl[0][0] + dl[1] * gl[1][0] + dl[2] * gl[2][0],
                dl[0] * gl[0][1] + dl[1] * gl[1][1] + dl[2] * gl[2][1],
            ];
        }
    }

    /// Values of `L*` applied to every element basis function at a
    /// barycentric point; the absorption is constant on the element.
    pub fn apply_adjoint_to_basis(
        &self,
        coeffs: &Coefficients,
        t: usize,
        lam: [f64; 3],
    ) -> Vec<f64> {
        let n = self.local_dofs();
        let mut values = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        let mut out = vec![0.0; n];
        self.apply_adjoint_to_basis_into(coeffs, t, lam, &mut values, &mut grads, &mut out);
        out
    }

    pub fn apply_adjoint_to_basis_into(
        &self,
        coeffs: &Coefficients,
        t: usize,
        lam: [f64; 3],
        values: &mut [f64],
        grads: &mut [[f64; 2]],
        out: &mut [f64],
    ) {
        self.eval_basis_into(t, lam, values, grads);
        let sigma = element_sigma(&self.mesh, t, coeffs);
        let b = coeffs.b;
        for i in 0..self.local_dofs() {
            out[i] = -(b[0] * grads[i][0] + b[1] * grads[i][1]) + sigma * values[i];
        }
    }
}

/// Absorption on an element, determined by its region tag.
pub fn element_sigma(mesh: &Mesh, t: usize, coeffs: &Coefficients) -> f64 {
    match mesh.region_tags[t] {
        RegionTag::In => coeffs.sigma_in,
        RegionTag::Out => coeffs.sigma_out,
    }
}

/// A function evaluable element-by-element on some mesh.
pub trait MeshField {
    fn mesh(&self) -> &Arc<Mesh>;
    fn eval(&self, t: usize, lam: [f64; 3]) -> f64;
}

impl MeshField for FEFunction {
    fn mesh(&self) -> &Arc<Mesh> {
        &self.space.mesh
    }
    fn eval(&self, t: usize, lam: [f64; 3]) -> f64 {
        FEFunction::eval(self, t, lam)
    }
}

/// A finite element function: coefficients over the unconstrained dofs of a
/// space; constrained dofs are implicitly zero.
#[derive(Debug, Clone)]
pub struct FEFunction {
    pub space: Arc<FunctionSpace>,
    pub coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has length {}, space dimension is {}",
                coeffs.len(),
                space.dim
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zero(space: Arc<FunctionSpace>) -> Self {
        let coeffs = vec![0.0; space.dim];
        Self { space, coeffs }
    }

    fn node_value(&self, node: usize) -> f64 {
        match self.space.reduced_index(node) {
            Some(r) => self.coeffs[r],
            None => 0.0,
        }
    }

    /// Value at a barycentric point of triangle `t`.
    pub fn eval(&self, t: usize, lam: [f64; 3]) -> f64 {
        let (values, _) = self.space.eval_basis(t, lam);
        self.space.element_dofs[t]
            .iter()
            .zip(&values)
            .map(|(&node, v)| self.node_value(node) * v)
            .sum()
    }

    /// Value and gradient at a barycentric point of triangle `t`.
    pub fn eval_with_grad(&self, t: usize, lam: [f64; 3]) -> (f64, [f64; 2]) {
        let (values, grads) = self.space.eval_basis(t, lam);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for ((&node, bv), bg) in self.space.element_dofs[t].iter().zip(&values).zip(&grads) {
            let c = self.node_value(node);
            v += c * bv;
            g[0] += c * bg[0];
            g[1] += c * bg[1];
        }
        (v, g)
    }

    /// Value at a physical point, located on the function's own mesh.
    pub fn eval_at(&self, p: Point) -> Result<f64> {
        let (t, lam) = self.space.mesh.locate(p)?;
        Ok(self.eval(t, lam))
    }

    /// Evaluates at a point of a descendant mesh via the ancestry map entry
    /// `(ancestor_tri, bary_map)`.
    pub fn eval_mapped(&self, map_entry: &(usize, crate::mesh::BaryMap), lam: [f64; 3]) -> f64 {
        self.eval(map_entry.0, bary_apply(&map_entry.1, lam))
    }
}

/// Nodal interpolation; constrained dofs stay zero regardless of `f`.
pub fn interpolate<F>(space: &Arc<FunctionSpace>, f: F) -> FEFunction
where
    F: Fn(Point) -> f64,
{
    let coeffs = (0..space.dim)
        .map(|r| f(space.dof_coords[space.node_of_reduced(r)]))
        .collect();
    FEFunction { space: Arc::clone(space), coeffs }
}
