//! Assembly of the least-squares system matrices and right-hand sides.
//!
//! All element loops run over the adjoint-space mesh (the finer one for
//! nested pairs), where every integrand is a polynomial per cell, so the
//! Gaussian rules integrate exactly. Trial-space basis functions are
//! evaluated across meshes through the refinement ancestry maps.

use crate::linalg::SparseMatrix;
use crate::mesh::{bary_apply, BaryMap, BoundaryLabel, Mesh};
use crate::problem::{Coefficients, Point};
use crate::quadrature::{edge_rule, quadrature_rule};
use crate::space::FunctionSpace;
use crate::{Error, Result};
use std::collections::HashMap;

/// Per-element map from the z-side mesh into the u-side mesh.
fn nesting_map(
    u_space: &FunctionSpace,
    z_space: &FunctionSpace,
) -> Result<Vec<(usize, BaryMap)>> {
    z_space.mesh.map_to_ancestor(&u_space.mesh).ok_or_else(|| {
        Error::InvalidArgument(
            "the adjoint-space mesh must equal the trial-space mesh or be one of its refinements"
                .into(),
        )
    })
}

fn assembly_degree(u_order: usize, z_order: usize) -> usize {
    2 * u_order.max(z_order) + 2
}

/// Mixed matrix with entries `<phi_j, L* psi_i>`; rows follow the reduced
/// numbering of the adjoint space, columns the trial space.
pub fn assemble_l(
    u_space: &FunctionSpace,
    z_space: &FunctionSpace,
    coeffs: &Coefficients,
) -> Result<SparseMatrix> {
    let map = nesting_map(u_space, z_space)?;
    let rule = quadrature_rule(assembly_degree(u_space.order, z_space.order))?;
    let nq = rule.len();
    let zn = z_space.local_dofs();
    let un = u_space.local_dofs();

    let mut z_vals = vec![0.0; zn];
    let mut z_grads = vec![[0.0; 2]; zn];
    let mut adj = vec![vec![0.0; zn]; nq];
    let mut u_vals = vec![vec![0.0; un]; nq];
    let mut u_grads = vec![[0.0; 2]; un];
    let mut triplets = Vec::new();

    for (tz, &(tu, bmap)) in map.iter().enumerate() {
        let scale = 2.0 * z_space.mesh.triangle_area(tz);
        for (q, lam) in rule.points.iter().enumerate() {
            z_space.apply_adjoint_to_basis_into(
                coeffs,
                tz,
                *lam,
                &mut z_vals,
                &mut z_grads,
                &mut adj[q],
            );
            let u_lam = bary_apply(&bmap, *lam);
            u_space.eval_basis_into(tu, u_lam, &mut u_vals[q], &mut u_grads);
        }
        for (iz, &znode) in z_space.element_dofs[tz].iter().enumerate() {
            let Some(row) = z_space.reduced_index(znode) else { continue };
            for (ju, &unode) in u_space.element_dofs[tu].iter().enumerate() {
                let Some(col) = u_space.reduced_index(unode) else { continue };
                let mut acc = 0.0;
                for q in 0..nq {
                    acc += rule.weights[q] * adj[q][iz] * u_vals[q][ju];
                }
                triplets.push((row, col, scale * acc));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(z_space.dim, u_space.dim, triplets))
}

/// Gram matrix of the adjoint images, `<L* psi_j, L* psi_i>`. Symmetric, and
/// positive definite whenever the space carries the outflow trace constraint.
pub fn assemble_h(z_space: &FunctionSpace, coeffs: &Coefficients) -> Result<SparseMatrix> {
    let rule = quadrature_rule(assembly_degree(z_space.order, z_space.order))?;
    let nq = rule.len();
    let zn = z_space.local_dofs();
    let mut vals = vec![0.0; zn];
    let mut grads = vec![[0.0; 2]; zn];
    let mut adj = vec![vec![0.0; zn]; nq];
    let mut triplets = Vec::new();

    for tz in 0..z_space.mesh.num_triangles() {
        let scale = 2.0 * z_space.mesh.triangle_area(tz);
        for (q, lam) in rule.points.iter().enumerate() {
            z_space.apply_adjoint_to_basis_into(coeffs, tz, *lam, &mut vals, &mut grads, &mut adj[q]);
        }
        let dofs = &z_space.element_dofs[tz];
        for (i, &ni) in dofs.iter().enumerate() {
            let Some(row) = z_space.reduced_index(ni) else { continue };
            for (j, &nj) in dofs.iter().enumerate() {
                let Some(col) = z_space.reduced_index(nj) else { continue };
                let mut acc = 0.0;
                for q in 0..nq {
                    acc += rule.weights[q] * adj[q][i] * adj[q][j];
                }
                triplets.push((row, col, scale * acc));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(z_space.dim, z_space.dim, triplets))
}

/// Mass matrix `<phi_j, phi_i>` of a space.
pub fn assemble_mass(space: &FunctionSpace) -> Result<SparseMatrix> {
    let rule = quadrature_rule(assembly_degree(space.order, space.order))?;
    let nq = rule.len();
    let n = space.local_dofs();
    let mut grads = vec![[0.0; 2]; n];
    let mut vals = vec![vec![0.0; n]; nq];
    let mut triplets = Vec::new();

    for t in 0..space.mesh.num_triangles() {
        let scale = 2.0 * space.mesh.triangle_area(t);
        for (q, lam) in rule.points.iter().enumerate() {
            space.eval_basis_into(t, *lam, &mut vals[q], &mut grads);
        }
        let dofs = &space.element_dofs[t];
        for (i, &ni) in dofs.iter().enumerate() {
            let Some(row) = space.reduced_index(ni) else { continue };
            for (j, &nj) in dofs.iter().enumerate() {
                let Some(col) = space.reduced_index(nj) else { continue };
                let mut acc = 0.0;
                for q in 0..nq {
                    acc += rule.weights[q] * vals[q][i] * vals[q][j];
                }
                triplets.push((row, col, scale * acc));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(space.dim, space.dim, triplets))
}

/// Right-hand side with the inflow datum imposed weakly:
/// `<r, psi_i> - int_{inflow} (b g) . n psi_i ds`. Since `b . n < 0` on the
/// inflow boundary the boundary term adds nonnegative contributions for
/// nonnegative data.
pub fn assemble_rhs_weak(z_space: &FunctionSpace, coeffs: &Coefficients) -> Result<Vec<f64>> {
    let mut rhs = if coeffs.has_source() {
        assemble_rhs_strong(z_space, |p| coeffs.source_at(p))?
    } else {
        vec![0.0; z_space.dim]
    };
    add_inflow_boundary_term(z_space, coeffs, coeffs.g, &mut rhs)?;
    Ok(rhs)
}

/// Adds `-int_{inflow} (b . n) g psi_i ds` to `rhs`.
fn add_inflow_boundary_term(
    z_space: &FunctionSpace,
    coeffs: &Coefficients,
    g: f64,
    rhs: &mut [f64],
) -> Result<()> {
    if g == 0.0 {
        return Ok(());
    }
    let mesh = &z_space.mesh;
    let (spts, swts) = edge_rule(z_space.order + 2)?;
    let owner = boundary_edge_owners(mesh);
    let zn = z_space.local_dofs();
    let mut vals = vec![0.0; zn];
    let mut grads = vec![[0.0; 2]; zn];

    for ([a, b_vert], label) in &mesh.boundary_edges {
        if *label != BoundaryLabel::Inflow {
            continue;
        }
        let key = sorted_pair(*a, *b_vert);
        let &(t, k) = owner
            .get(&key)
            .ok_or_else(|| Error::InvalidMesh("boundary edge without owner".into()))?;
        let tri = mesh.triangles[t];
        // Parametrize along the element's local edge orientation.
        let (va, vb) = (tri[k], tri[(k + 1) % 3]);
        let pa = mesh.vertices[va];
        let pb = mesh.vertices[vb];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        // Outward normal of the CCW element lies to the right of the edge.
        let normal = [(pb[1] - pa[1]) / len, (pa[0] - pb[0]) / len];
        let bdotn = coeffs.b[0] * normal[0] + coeffs.b[1] * normal[1];
        for (s, w) in spts.iter().zip(&swts) {
            let mut lam = [0.0; 3];
            lam[k] = 1.0 - s;
            lam[(k + 1) % 3] = *s;
            z_space.eval_basis_into(t, lam, &mut vals, &mut grads);
            let factor = -bdotn * g * w * len;
            for (i, &node) in z_space.element_dofs[t].iter().enumerate() {
                if let Some(row) = z_space.reduced_index(node) {
                    rhs[row] += factor * vals[i];
                }
            }
        }
    }
    Ok(())
}

/// Volume-only load vector `<f, psi_i>` for a lifted problem with
/// homogeneous inflow data.
pub fn assemble_rhs_strong<F>(z_space: &FunctionSpace, f: F) -> Result<Vec<f64>>
where
    F: Fn(Point) -> f64,
{
    let rule = quadrature_rule((2 * z_space.order + 2).min(crate::quadrature::MAX_DEGREE))?;
    let zn = z_space.local_dofs();
    let mut vals = vec![0.0; zn];
    let mut grads = vec![[0.0; 2]; zn];
    let mut rhs = vec![0.0; z_space.dim];
    for t in 0..z_space.mesh.num_triangles() {
        let scale = 2.0 * z_space.mesh.triangle_area(t);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let p = z_space.mesh.point_at(t, *lam);
            let fv = f(p);
            if fv == 0.0 {
                continue;
            }
            z_space.eval_basis_into(t, *lam, &mut vals, &mut grads);
            let factor = scale * w * fv;
            for (i, &node) in z_space.element_dofs[t].iter().enumerate() {
                if let Some(row) = z_space.reduced_index(node) {
                    rhs[row] += factor * vals[i];
                }
            }
        }
    }
    Ok(rhs)
}

pub(crate) fn boundary_edge_owners(mesh: &Mesh) -> HashMap<[usize; 2], (usize, usize)> {
    let mut owner = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let key = sorted_pair(tri[k], tri[(k + 1) % 3]);
            owner.entry(key).or_insert((t, k));
        }
    }
    owner
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}
