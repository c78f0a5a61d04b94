//! Conforming triangulations of the unit square.
//!
//! Meshes resolve the absorbing subregion (its boundary is a union of mesh
//! edges), carry inflow/outflow labels on boundary edges, and remember their
//! refinement ancestry so that nested pairs of meshes can be assembled
//! against each other exactly.

use crate::problem::{Coefficients, Point};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Inflow (`b . n < 0`) or outflow (`b . n > 0`) boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLabel {
    Inflow,
    Outflow,
}

/// Subregion tag of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    In,
    Out,
}

/// Barycentric transform from a child triangle into an ancestor triangle.
/// `cols[j]` holds the ancestor barycentric coordinates of child vertex `j`.
pub type BaryMap = [[f64; 3]; 3];

pub const BARY_IDENTITY: BaryMap =
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Applies a barycentric transform: child coordinates to ancestor coordinates.
pub fn bary_apply(map: &BaryMap, lam: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for j in 0..3 {
        for i in 0..3 {
            out[i] += map[j][i] * lam[j];
        }
    }
    out
}

fn bary_compose(outer: &BaryMap, inner: &BaryMap) -> BaryMap {
    let mut out = [[0.0; 3]; 3];
    for j in 0..3 {
        out[j] = bary_apply(outer, inner[j]);
    }
    out
}

/// Per-triangle map into one ancestor mesh.
#[derive(Debug, Clone)]
struct AncestorMap {
    ancestor_id: u64,
    tri: Vec<usize>,
    bary: Vec<BaryMap>,
}

#[derive(Debug)]
struct Locator {
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

/// Conforming triangulation of `(0, 1)^2` with region tags on triangles and
/// flow labels on boundary edges.
#[derive(Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<([usize; 2], BoundaryLabel)>,
    pub region_tags: Vec<RegionTag>,
    /// Maximum edge length.
    pub h: f64,
    id: u64,
    ancestry: Vec<AncestorMap>,
    locator: OnceLock<Locator>,
}

impl Mesh {
    /// Builds a mesh from raw arrays and validates conformity, orientation,
    /// and boundary coverage.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        region_tags: Vec<RegionTag>,
        boundary_edges: Vec<([usize; 2], BoundaryLabel)>,
    ) -> Result<Self> {
        let mut mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
            region_tags,
            h: 0.0,
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            ancestry: Vec::new(),
            locator: OnceLock::new(),
        };
        mesh.validate()?;
        mesh.h = mesh.max_edge_length();
        Ok(mesh)
    }

    /// Builds a mesh from a triangulation, deriving region tags from triangle
    /// centroids and boundary labels from the flow direction.
    pub fn from_triangulation(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        coeffs: &Coefficients,
    ) -> Result<Self> {
        if triangles.iter().any(|t| t.iter().any(|&v| v >= vertices.len())) {
            return Err(Error::InvalidMesh("triangle references a missing vertex".into()));
        }
        let region_tags = triangles
            .iter()
            .map(|t| {
                let c = centroid_of(&vertices, t);
                if coeffs.omega_in.contains_strict(c) {
                    RegionTag::In
                } else {
                    RegionTag::Out
                }
            })
            .collect();
        let boundary_edges = derive_boundary_labels(&vertices, &triangles, coeffs.b)?;
        Self::from_parts(vertices, triangles, region_tags, boundary_edges)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_vertices(t);
        signed_area(p0, p1, p2)
    }

    pub fn centroid(&self, t: usize) -> Point {
        centroid_of(&self.vertices, &self.triangles[t])
    }

    /// Physical coordinates of a barycentric point in triangle `t`.
    pub fn point_at(&self, t: usize, lam: [f64; 3]) -> Point {
        let [p0, p1, p2] = self.triangle_vertices(t);
        [
            lam[0] * p0[0] + lam[1] * p1[0] + lam[2] * p2[0],
            lam[0] * p0[1] + lam[1] * p1[1] + lam[2] * p2[1],
        ]
    }

    /// Constant gradients of the barycentric coordinate functions on `t`.
    pub fn grad_lambda(&self, t: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.triangle_vertices(t);
        let inv2a = 1.0 / (2.0 * signed_area(p0, p1, p2));
        [
            [(p1[1] - p2[1]) * inv2a, (p2[0] - p1[0]) * inv2a],
            [(p2[1] - p0[1]) * inv2a, (p0[0] - p2[0]) * inv2a],
            [(p0[1] - p1[1]) * inv2a, (p1[0] - p0[0]) * inv2a],
        ]
    }

    fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let a = self.vertices[t[k]];
                let b = self.vertices[t[(k + 1) % 3]];
                h = h.max(dist(a, b));
            }
        }
        h
    }

    pub fn min_edge_length(&self) -> f64 {
        let mut h = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let a = self.vertices[t[k]];
                let b = self.vertices[t[(k + 1) % 3]];
                h = h.min(dist(a, b));
            }
        }
        h
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.region_tags.len() != self.triangles.len() {
            return Err(Error::InvalidMesh("region tag count != triangle count".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if self.triangle_area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate or clockwise (area {})",
                    self.triangle_area(t)
                )));
            }
        }
        // Conformity: every undirected edge is shared by at most two
        // triangles, and the single-sided ones exactly form the boundary.
        let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = sorted_pair(tri[k], tri[(k + 1) % 3]);
                *edge_count.entry(e).or_insert(0) += 1;
            }
        }
        if edge_count.values().any(|&c| c > 2) {
            return Err(Error::InvalidMesh("an edge is shared by more than two triangles".into()));
        }
        let mut boundary: Vec<[usize; 2]> = edge_count
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&e, _)| e)
            .collect();
        boundary.sort_unstable();
        let mut listed: Vec<[usize; 2]> = self
            .boundary_edges
            .iter()
            .map(|(e, _)| sorted_pair(e[0], e[1]))
            .collect();
        listed.sort_unstable();
        if boundary != listed {
            return Err(Error::InvalidMesh(
                "boundary edge list does not match the triangulation boundary".into(),
            ));
        }
        Ok(())
    }

    /// Splits every triangle into four congruent children via edge midpoints.
    /// Region tags and boundary labels are inherited, and the child mesh
    /// keeps barycentric maps into this mesh and all of its ancestors.
    pub fn uniform_refine(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = sorted_pair(a, b);
            *midpoint.entry(key).or_insert_with(|| {
                let pa = vertices[a];
                let pb = vertices[b];
                vertices.push([(pa[0] + pb[0]) * 0.5, (pa[1] + pb[1]) * 0.5]);
                vertices.len() - 1
            })
        };

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut region_tags = Vec::with_capacity(4 * self.triangles.len());
        let mut parent_tri = Vec::with_capacity(4 * self.triangles.len());
        let mut parent_bary: Vec<BaryMap> = Vec::with_capacity(4 * self.triangles.len());

        const V0: [f64; 3] = [1.0, 0.0, 0.0];
        const V1: [f64; 3] = [0.0, 1.0, 0.0];
        const V2: [f64; 3] = [0.0, 0.0, 1.0];
        const M01: [f64; 3] = [0.5, 0.5, 0.0];
        const M12: [f64; 3] = [0.0, 0.5, 0.5];
        const M20: [f64; 3] = [0.5, 0.0, 0.5];

        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            let mab = mid(a, b, &mut vertices);
            let mbc = mid(b, c, &mut vertices);
            let mca = mid(c, a, &mut vertices);
            let children: [([usize; 3], BaryMap); 4] = [
                ([a, mab, mca], [V0, M01, M20]),
                ([b, mbc, mab], [V1, M12, M01]),
                ([c, mca, mbc], [V2, M20, M12]),
                ([mab, mbc, mca], [M01, M12, M20]),
            ];
            for (child, bmap) in children {
                triangles.push(child);
                region_tags.push(self.region_tags[t]);
                parent_tri.push(t);
                parent_bary.push(bmap);
            }
        }

        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for &([a, b], label) in &self.boundary_edges {
            let m = mid(a, b, &mut vertices);
            boundary_edges.push(([a, m], label));
            boundary_edges.push(([m, b], label));
        }

        // Ancestry: the immediate parent first, then the parent's ancestors
        // composed with the new parent maps.
        let mut ancestry = vec![AncestorMap {
            ancestor_id: self.id,
            tri: parent_tri.clone(),
            bary: parent_bary.clone(),
        }];
        for anc in &self.ancestry {
            let tri: Vec<usize> = parent_tri.iter().map(|&p| anc.tri[p]).collect();
            let bary: Vec<BaryMap> = parent_tri
                .iter()
                .zip(&parent_bary)
                .map(|(&p, bmap)| bary_compose(&anc.bary[p], bmap))
                .collect();
            ancestry.push(AncestorMap { ancestor_id: anc.ancestor_id, tri, bary });
        }

        let mut mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
            region_tags,
            h: 0.0,
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            ancestry,
            locator: OnceLock::new(),
        };
        mesh.h = mesh.max_edge_length();
        mesh
    }

    /// Whether `ancestor` is this mesh or one of its refinement ancestors.
    pub fn is_descendant_of(&self, ancestor: &Mesh) -> bool {
        self.id == ancestor.id || self.ancestry.iter().any(|a| a.ancestor_id == ancestor.id)
    }

    /// For each triangle of this mesh, the containing triangle of `ancestor`
    /// together with the barycentric transform into it. Identity when the
    /// meshes coincide; `None` when `ancestor` is not an ancestor.
    pub fn map_to_ancestor(&self, ancestor: &Mesh) -> Option<Vec<(usize, BaryMap)>> {
        if self.id == ancestor.id {
            return Some((0..self.triangles.len()).map(|t| (t, BARY_IDENTITY)).collect());
        }
        self.ancestry
            .iter()
            .find(|a| a.ancestor_id == ancestor.id)
            .map(|a| a.tri.iter().copied().zip(a.bary.iter().copied()).collect())
    }

    /// Finds the triangle containing `p` and its barycentric coordinates.
    /// Ties on shared edges resolve to the lowest triangle index.
    pub fn locate(&self, p: Point) -> Result<(usize, [f64; 3])> {
        let loc = self.locator.get_or_init(|| self.build_locator());
        let clamp = |v: f64, n: usize| ((v * n as f64) as isize).clamp(0, n as isize - 1) as usize;
        let (cx, cy) = (clamp(p[0], loc.nx), clamp(p[1], loc.ny));
        for tol in [1e-12, 1e-8] {
            let mut best: Option<(usize, [f64; 3])> = None;
            for &t in &loc.cells[cy * loc.nx + cx] {
                let lam = self.barycentric(t, p);
                if lam.iter().all(|&l| l >= -tol) {
                    best = Some((t, lam));
                    break;
                }
            }
            if let Some((t, lam)) = best {
                let sum: f64 = lam.iter().sum();
                return Ok((t, [lam[0] / sum, lam[1] / sum, lam[2] / sum]));
            }
        }
        Err(Error::PointOutsideMesh(p[0], p[1]))
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [p0, p1, p2] = self.triangle_vertices(t);
        let inv = 1.0 / signed_area(p0, p1, p2);
        [
            signed_area(p, p1, p2) * inv,
            signed_area(p0, p, p2) * inv,
            signed_area(p0, p1, p) * inv,
        ]
    }

    fn build_locator(&self) -> Locator {
        let n = ((self.triangles.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (n, n);
        let mut cells = vec![Vec::new(); nx * ny];
        for (t, tri) in self.triangles.iter().enumerate() {
            let xs = tri.map(|v| self.vertices[v][0]);
            let ys = tri.map(|v| self.vertices[v][1]);
            let fmin = |a: [f64; 3]| a.iter().cloned().fold(f64::INFINITY, f64::min);
            let fmax = |a: [f64; 3]| a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let to_cell = |v: f64, n: usize| ((v * n as f64) as isize).clamp(0, n as isize - 1) as usize;
            let (x0, x1) = (to_cell(fmin(xs) - 1e-12, nx), to_cell(fmax(xs) + 1e-12, nx));
            let (y0, y1) = (to_cell(fmin(ys) - 1e-12, ny), to_cell(fmax(ys) + 1e-12, ny));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    cells[cy * nx + cx].push(t);
                }
            }
        }
        Locator { nx, ny, cells }
    }

    /// Plain-text export: `nv nt nb`, vertex lines `x y`, triangle lines
    /// `v0 v1 v2 tag`, boundary lines `v0 v1 label` (0-based indices).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{} {}", v[0], v[1]);
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let tag = match self.region_tags[t] {
                RegionTag::In => "in",
                RegionTag::Out => "out",
            };
            let _ = writeln!(out, "{} {} {} {}", tri[0], tri[1], tri[2], tag);
        }
        for ([a, b], label) in &self.boundary_edges {
            let name = match label {
                BoundaryLabel::Inflow => "inflow",
                BoundaryLabel::Outflow => "outflow",
            };
            let _ = writeln!(out, "{} {} {}", a, b, name);
        }
        out
    }

    /// Parses the plain-text format written by [`Mesh::to_text`] and
    /// validates the result. Ancestry is not part of the format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of mesh text, expected {what}")))
        };
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse(format!("invalid integer '{s}'")))
        };
        let parse_f64 =
            |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number '{s}'")));

        let nv = parse_usize(next("vertex count")?)?;
        let nt = parse_usize(next("triangle count")?)?;
        let nb = parse_usize(next("boundary count")?)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = parse_f64(next("x")?)?;
            let y = parse_f64(next("y")?)?;
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        let mut region_tags = Vec::with_capacity(nt);
        for _ in 0..nt {
            let v0 = parse_usize(next("v0")?)?;
            let v1 = parse_usize(next("v1")?)?;
            let v2 = parse_usize(next("v2")?)?;
            let tag = match next("tag")? {
                "in" => RegionTag::In,
                "out" => RegionTag::Out,
                other => return Err(Error::Parse(format!("invalid region tag '{other}'"))),
            };
            triangles.push([v0, v1, v2]);
            region_tags.push(tag);
        }
        let mut boundary_edges = Vec::with_capacity(nb);
        for _ in 0..nb {
            let a = parse_usize(next("edge v0")?)?;
            let b = parse_usize(next("edge v1")?)?;
            let label = match next("label")? {
                "inflow" => BoundaryLabel::Inflow,
                "outflow" => BoundaryLabel::Outflow,
                other => return Err(Error::Parse(format!("invalid boundary label '{other}'"))),
            };
            boundary_edges.push(([a, b], label));
        }
        Self::from_parts(vertices, triangles, region_tags, boundary_edges)
    }
}

/// Generates a jittered structured triangulation of the unit square.
///
/// `n` is the number of subdivisions per side and must be a positive multiple
/// of four so the grid resolves the absorbing square. Interior vertices away
/// from the subregion interface are displaced by exactly `jitter / n` in a
/// seeded pseudo-random direction; boundary and interface vertices stay put.
/// Cells split into triangles with alternating diagonals, so the mesh is not
/// aligned with any fixed flow direction.
pub fn generate_square_mesh(
    n: usize,
    jitter: f64,
    seed: u64,
    coeffs: &Coefficients,
) -> Result<Mesh> {
    if n < 4 || n % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "subdivision count must be a multiple of 4 and >= 4, got {n}"
        )));
    }
    if !(0.0..0.3).contains(&jitter) {
        return Err(Error::InvalidArgument(format!("jitter must lie in [0, 0.3), got {jitter}")));
    }
    for attempt_jitter in [jitter, jitter * 0.5] {
        match try_generate(n, attempt_jitter, seed, coeffs) {
            Ok(mesh) => {
                // Quasi-uniformity guard, same retry policy as inversion.
                if mesh.h / mesh.min_edge_length() <= 4.0 {
                    return Ok(mesh);
                }
            }
            Err(Error::InvalidMesh(_)) if attempt_jitter == jitter && jitter > 0.0 => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidMesh(format!(
        "jitter {jitter} produced an inverted or badly distorted mesh even after halving"
    )))
}

fn try_generate(n: usize, jitter: f64, seed: u64, coeffs: &Coefficients) -> Result<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = n + 1;
    let hx = 1.0 / n as f64;
    let (q1, q3) = (n / 4, 3 * n / 4);
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            let mut p = [i as f64 * hx, j as f64 * hx];
            let on_boundary = i == 0 || i == n || j == 0 || j == n;
            let on_interface = ((i == q1 || i == q3) && (q1..=q3).contains(&j))
                || ((j == q1 || j == q3) && (q1..=q3).contains(&i));
            if !on_boundary && !on_interface && jitter > 0.0 {
                p[0] += jitter * hx * angle.cos();
                p[1] += jitter * hx * angle.sin();
            }
            vertices.push(p);
        }
    }

    let idx = |i: usize, j: usize| j * np + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10) = (idx(i, j), idx(i + 1, j));
            let (v01, v11) = (idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    Mesh::from_triangulation(vertices, triangles, coeffs)
}

fn derive_boundary_labels(
    vertices: &[Point],
    triangles: &[[usize; 3]],
    b: [f64; 2],
) -> Result<Vec<([usize; 2], BoundaryLabel)>> {
    // Boundary edges appear in exactly one triangle; keep the orientation of
    // the owning triangle so the outward normal is the right-hand rotation.
    let mut count: HashMap<[usize; 2], ([usize; 2], usize)> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, bb) = (tri[k], tri[(k + 1) % 3]);
            count
                .entry(sorted_pair(a, bb))
                .and_modify(|e| e.1 += 1)
                .or_insert(([a, bb], 1));
        }
    }
    let mut edges: Vec<[usize; 2]> =
        count.values().filter(|(_, c)| *c == 1).map(|(e, _)| *e).collect();
    edges.sort_unstable();
    let mut out = Vec::with_capacity(edges.len());
    for [a, bb] in edges {
        let pa = vertices[a];
        let pb = vertices[bb];
        // CCW triangle orientation puts the outward normal to the right of
        // the directed edge.
        let normal = [pb[1] - pa[1], pa[0] - pb[0]];
        let flux = b[0] * normal[0] + b[1] * normal[1];
        let scale = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        if flux.abs() <= 1e-12 * scale {
            return Err(Error::InvalidMesh(
                "boundary edge is characteristic (b . n = 0); labels are ambiguous".into(),
            ));
        }
        let label = if flux < 0.0 { BoundaryLabel::Inflow } else { BoundaryLabel::Outflow };
        out.push(([a, bb], label));
    }
    Ok(out)
}

fn centroid_of(vertices: &[Point], tri: &[usize; 3]) -> Point {
    let [a, b, c] = tri.map(|v| vertices[v]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

pub fn signed_area(p0: Point, p1: Point, p2: Point) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}
