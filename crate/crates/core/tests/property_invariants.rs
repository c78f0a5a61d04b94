//! Property-based invariants over randomized inputs.

mod common;

use llstar::linalg::{cg, ScaledIdentity, SparseMatrix};
use llstar::mesh::generate_square_mesh;
use llstar::problem::Coefficients;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Generated meshes stay valid across subdivision counts, jitter
    /// magnitudes, and seeds: positive CCW areas covering the unit square,
    /// a boundary of total length four, bounded edge-length ratios, and
    /// region tags that exactly tile the absorbing square.
    #[test]
    fn generated_meshes_are_valid(
        n_quarter in 1usize..5,
        jitter in 0.0f64..0.29,
        seed in any::<u64>(),
    ) {
        let n = 4 * n_quarter;
        let coeffs = Coefficients::new(common::ALPHA, 1e4, 1e-4).unwrap();
        let mesh = generate_square_mesh(n, jitter, seed, &coeffs).unwrap();
        let mut area = 0.0;
        let mut inner_area = 0.0;
        for t in 0..mesh.num_triangles() {
            let a = mesh.triangle_area(t);
            prop_assert!(a > 0.0);
            area += a;
            if mesh.region_tags[t] == llstar::mesh::RegionTag::In {
                inner_area += a;
            }
        }
        prop_assert!((area - 1.0).abs() < 1e-12);
        prop_assert!((inner_area - 0.25).abs() < 1e-12);
        let blen: f64 = mesh
            .boundary_edges
            .iter()
            .map(|([a, b], _)| {
                let pa = mesh.vertices[*a];
                let pb = mesh.vertices[*b];
                ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
            })
            .sum();
        prop_assert!((blen - 4.0).abs() < 1e-12);
        prop_assert!(mesh.h / mesh.min_edge_length() <= 4.0);
    }

    /// Refinement preserves region tags and nests children inside parents.
    #[test]
    fn refinement_nests_and_inherits(seed in any::<u64>(), jitter in 0.0f64..0.25) {
        let coeffs = Coefficients::new(common::ALPHA, 1e4, 1e-4).unwrap();
        let mesh = generate_square_mesh(4, jitter, seed, &coeffs).unwrap();
        let fine = mesh.uniform_refine();
        prop_assert_eq!(fine.num_triangles(), 4 * mesh.num_triangles());
        let map = fine.map_to_ancestor(&mesh).unwrap();
        for (child, &(parent, _)) in map.iter().enumerate() {
            prop_assert_eq!(fine.region_tags[child], mesh.region_tags[parent]);
            let lam = mesh.barycentric(parent, fine.centroid(child));
            prop_assert!(lam.iter().all(|&l| l > -1e-12));
        }
    }

    /// Triplet assembly, matvec, and transpose-matvec respect the duality
    /// `<A^T y, x> = <y, A x>` and match a dense reference.
    #[test]
    fn sparse_matrix_duality(
        entries in proptest::collection::vec((0usize..7, 0usize..5, -10.0f64..10.0), 0..40),
    ) {
        let m = SparseMatrix::from_triplets(7, 5, entries.clone());
        let mut dense = [[0.0f64; 5]; 7];
        for (r, c, v) in &entries {
            dense[*r][*c] += v;
        }
        let x: Vec<f64> = (0..5).map(|i| (i as f64) - 2.0).collect();
        let y: Vec<f64> = (0..7).map(|i| 0.5 * (i as f64) - 1.0).collect();
        let ax = m.matvec(&x);
        for r in 0..7 {
            let expected: f64 = (0..5).map(|c| dense[r][c] * x[c]).sum();
            prop_assert!((ax[r] - expected).abs() < 1e-12);
        }
        let aty = m.matvec_transpose(&y);
        let lhs: f64 = aty.iter().zip(&x).map(|(a, b)| a * b).sum();
        let rhs: f64 = y.iter().zip(&ax).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    /// CG solves random SPD systems to the requested tolerance.
    #[test]
    fn cg_solves_random_spd(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = rng.gen::<f64>() - 0.5;
                // A = R^T R + n I assembled entrywise below.
                triplets.push((i, j, v));
            }
        }
        let r = SparseMatrix::from_triplets(n, n, triplets);
        let rd = r.to_dense();
        let spd = rd.transpose() * &rd + nalgebra::DMatrix::identity(n, n) * n as f64;
        let mut spd_trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                spd_trip.push((i, j, spd[(i, j)]));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, spd_trip);
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let b = a.matvec(&x_true);
        let p = ScaledIdentity { n, scale: 1.0 };
        let (x, report) = cg(&a, &b, &p, 1e-12, 200).unwrap();
        prop_assert!(report.converged);
        for (xi, ti) in x.iter().zip(&x_true) {
            prop_assert!((xi - ti).abs() < 1e-8);
        }
    }
}
