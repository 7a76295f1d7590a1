use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_esdf(occ: &OccupancyGrid) -> Vec<f64> {
    let [nx, ny, nz] = occ.dims;
    let centers: Vec<Vec3> = (0..occ.len())
        .map(|i| occ.cell_center(i % nx, (i / nx) % ny, i / (nx * ny)))
        .collect();
    let diag = occ.resolution * ((nx * nx + ny * ny + nz * nz) as f64).sqrt();
    (0..occ.len())
        .map(|i| {
            let target = !occ.occupied[i];
            let d = (0..occ.len())
                .filter(|&j| occ.occupied[j] == target)
                .map(|j| (centers[i] - centers[j]).norm())
                .fold(f64::INFINITY, f64::min);
            let sign = if occ.occupied[i] { -1.0 } else { 1.0 };
            if d.is_finite() {
                sign * (d - 0.5 * occ.resolution)
            } else {
                sign * diag
            }
        })
        .collect()
}

#[test]
fn all_free_is_capped_at_diagonal() {
    let occ = OccupancyGrid::new(Vec3::zeros(), 0.1, [4, 5, 6]);
    let e = build_esdf(&occ).unwrap();
    let diag = 0.1 * (16.0f64 + 25.0 + 36.0).sqrt();
    assert!(e.values.iter().all(|&v| (v - diag).abs() < 1e-12));
}

#[test]
fn empty_grid_rejected() {
    let occ = OccupancyGrid::new(Vec3::zeros(), 0.1, [0, 3, 3]);
    assert!(matches!(build_esdf(&occ), Err(Error::EmptyGrid)));
}

#[test]
fn single_voxel_matches_brute_force() {
    let mut occ = OccupancyGrid::new(Vec3::new(-1.0, 0.5, 2.0), 0.2, [9, 7, 8]);
    occ.set(3, 2, 5, true);
    let e = build_esdf(&occ).unwrap();
    let center = occ.cell_center(3, 2, 5);
    for k in 0..8 {
        for j in 0..7 {
            for i in 0..9 {
                let v = e.value(i, j, k);
                if (i, j, k) == (3, 2, 5) {
                    assert!((v + 0.1).abs() < 1e-12);
                } else {
                    let expect = (occ.cell_center(i, j, k) - center).norm() - 0.1;
                    assert!((v - expect).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn random_grids_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(dims, density) in &[
        ([8, 8, 8], 0.3),
        ([13, 5, 9], 0.05),
        ([20, 20, 20], 0.02),
        ([32, 32, 32], 0.0006),
    ] {
        let mut occ = OccupancyGrid::new(Vec3::zeros(), 0.1, dims);
        for v in &mut occ.occupied {
            *v = rng.gen_bool(density);
        }
        occ.occupied[0] = true;
        let e = build_esdf(&occ).unwrap();
        let b = brute_esdf(&occ);
        for (x, y) in e.values.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{dims:?}: {x} vs {y}");
        }
    }
}

#[test]
fn half_space_is_axis_distance() {
    let mut occ = OccupancyGrid::new(Vec3::zeros(), 0.1, [6, 6, 12]);
    for k in 0..4 {
        for j in 0..6 {
            for i in 0..6 {
                occ.set(i, j, k, true);
            }
        }
    }
    let e = build_esdf(&occ).unwrap();
    for k in 0..12 {
        let expect = if k < 4 {
            -((4 - k) as f64 * 0.1 - 0.05)
        } else {
            (k as f64 - 3.0) * 0.1 - 0.05
        };
        assert!((e.value(2, 3, k) - expect).abs() < 1e-12);
    }
}

fn random_esdf(seed: u64) -> EsdfGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = OccupancyGrid::new(Vec3::new(-0.5, -0.5, 0.0), 0.1, [12, 10, 8]);
    for v in &mut occ.occupied {
        *v = rng.gen_bool(0.05);
    }
    build_esdf(&occ).unwrap()
}

#[test]
fn query_at_centers_and_edges() {
    let e = random_esdf(2);
    let c = e.origin + Vec3::new(3.0, 4.0, 5.0) * e.resolution;
    let q = e.query(&c);
    assert!(!q.out_of_bounds);
    assert!((q.distance - e.value(3, 4, 5)).abs() < 1e-12);
    let mid = c + Vec3::new(0.5, 0.0, 0.0) * e.resolution;
    let expect = 0.5 * (e.value(3, 4, 5) + e.value(4, 4, 5));
    assert!((e.distance(&mid) - expect).abs() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let e = random_esdf(5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (lo, hi) = e.bounds();
    for _ in 0..200 {
        let x = Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        );
        let u = (x - e.origin) / e.resolution;
        // keep the stencil inside one cell
        if (0..3).any(|a| (u[a] - u[a].round()).abs() < 1e-4) {
            continue;
        }
        let g = e.query(&x).gradient;
        let h = 1e-7;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (e.distance(&xp) - e.distance(&xm)) / (2.0 * h);
            assert!(
                (fd - g[a]).abs() < 1e-8 * (1.0 + fd.abs()) + 1e-7,
                "{fd} vs {}",
                g[a]
            );
        }
    }
}

#[test]
fn out_of_bounds_extrapolates() {
    let e = random_esdf(4);
    let (lo, hi) = e.bounds();
    let inside = Vec3::new(hi.x, 0.5 * (lo.y + hi.y), 0.5 * (lo.z + hi.z));
    let x = inside + Vec3::new(0.7, 0.0, 0.0);
    let q = e.query(&x);
    assert!(q.out_of_bounds);
    assert!((q.distance - (e.distance(&inside) + 0.7)).abs() < 1e-12);
    assert!((q.gradient.x - 1.0).abs() < 1e-12);
}

#[test]
fn adjacent_free_cells_are_close() {
    let e = random_esdf(8);
    let [nx, ny, nz] = e.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx - 1 {
                let (a, b) = (e.value(i, j, k), e.value(i + 1, j, k));
                if (a < 0.0) != (b < 0.0) {
                    assert!(
                        a.abs() <= e.resolution * 3f64.sqrt()
                            && b.abs() <= e.resolution * 3f64.sqrt()
                    );
                }
            }
        }
    }
}

#[test]
fn cache_round_trip() {
    let e = random_esdf(1);
    let mut buf = Vec::new();
    e.write_cache(&mut buf).unwrap();
    let back = EsdfGrid::read_cache(buf.as_slice()).unwrap();
    assert_eq!(back.dims, e.dims);
    assert_eq!(back.origin, e.origin);
    for (a, b) in back.values.iter().zip(&e.values) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(EsdfGrid::read_cache(&b"garbage!"[..]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.esdf");
    e.save_cache(&path).unwrap();
    assert_eq!(
        EsdfGrid::load_cache(&path).unwrap().values.len(),
        e.values.len()
    );
}

#[test]
fn point_cloud_parsers() {
    let pts = parse_xyz("# cloud\n1 2 3\n\n4,5,6 extra\n").unwrap();
    assert_eq!(
        pts,
        vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]
    );
    assert!(matches!(
        parse_xyz("1 2\n"),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(matches!(
        parse_xyz("1 2 3\n1 x 2\n"),
        Err(Error::Parse { line: 2, .. })
    ));

    let ply = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float y\nproperty float x\nproperty float z\n\
               element face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3\n4 5 6\n";
    let pts = parse_ply(ply).unwrap();
    assert_eq!(pts[0], Vec3::new(2.0, 1.0, 3.0));
    assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    std::fs::write(&path, ply).unwrap();
    assert_eq!(load_points(&path).unwrap().len(), 2);
    let grid = OccupancyGrid::from_points(&pts, 0.5, 1.0).unwrap();
    assert_eq!(grid.occupied.iter().filter(|&&o| o).count(), 2);
    assert!(OccupancyGrid::from_points(&[], 0.1, 0.0).is_err());
}

#[test]
fn map_esdf_tracks_analytic_distance() {
    let spec = MapSpec::new([0.0, -2.0, 0.0], [4.0, 2.0, 2.0], 0.1)
        .with_obstacle(Obstacle::Cylinder {
            center: [1.0, 0.5],
            radius: 0.3,
            z_min: 0.0,
            z_max: 2.0,
        })
        .with_obstacle(Obstacle::GapWall {
            x: 3.0,
            thickness: 0.2,
            y_min: -2.0,
            y_max: 2.0,
            z_min: 0.0,
            z_max: 2.0,
            gap_center: 0.0,
            gap_width: 1.0,
        });
    let e = spec.esdf().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let x = Vec3::new(
            rng.gen_range(0.2..3.8),
            rng.gen_range(-1.8..1.8),
            rng.gen_range(0.2..1.8),
        );
        let exact = spec.signed_distance(&x);
        // voxelization plus the half-cell convention
        assert!(
            (e.distance(&x) - exact).abs() < 0.16,
            "{x:?}: {} vs {exact}",
            e.distance(&x)
        );
    }
    assert!(spec.signed_distance(&Vec3::new(3.0, 0.0, 1.0)) > 0.49);
    assert!(spec.signed_distance(&Vec3::new(3.0, 1.0, 1.0)) < 0.0);
}

#[test]
fn map_spec_json() {
    let text = r#"{"min":[0,0,0],"max":[1,1,1],"obstacles":[{"type":"box","min":[0.2,0.2,0.2],"max":[0.4,0.4,0.4]}]}"#;
    let spec: MapSpec = serde_json::from_str(text).unwrap();
    assert_eq!(spec.resolution, 0.1);
    assert!(spec.signed_distance(&Vec3::new(0.3, 0.3, 0.3)) < 0.0);
}

proptest! {
    #[test]
    fn lipschitz_between_cells(seed in 0u64..500, a in 0usize..960, b in 0usize..960) {
        let e = random_esdf(seed % 7);
        let [nx, ny, _] = e.dims;
        let ca = e.origin + Vec3::new((a % nx) as f64, ((a / nx) % ny) as f64, (a / (nx * ny)) as f64) * e.resolution;
        let cb = e.origin + Vec3::new((b % nx) as f64, ((b / nx) % ny) as f64, (b / (nx * ny)) as f64) * e.resolution;
        let tol = e.resolution * 3f64.sqrt();
        prop_assert!((e.distance(&ca) - e.distance(&cb)).abs() <= (ca - cb).norm() + tol);
    }
}
