use super::{EsdfGrid, OccupancyGrid};

/// Cells above which the quadratic oracle is refused.
pub const ORACLE_MAX_CELLS: usize = 32 * 32 * 32;

/// Signed distance field by comparing every cell pair: squared index
/// distance to the nearest cell of the other kind (exact in integers),
/// scaled to meters less half a cell, negative inside obstacles. Quadratic
/// in the cell count.
pub fn brute_force_esdf(occ: &OccupancyGrid) -> Vec<f64> {
    let [nx, ny, nz] = occ.dims;
    let idx = |i: usize| {
        [
            (i % nx) as i64,
            ((i / nx) % ny) as i64,
            (i / (nx * ny)) as i64,
        ]
    };
    let occupied: Vec<[i64; 3]> = (0..occ.len())
        .filter(|&i| occ.occupied[i])
        .map(idx)
        .collect();
    let free: Vec<[i64; 3]> = (0..occ.len())
        .filter(|&i| !occ.occupied[i])
        .map(idx)
        .collect();
    let res = occ.resolution;
    let diag = res * ((nx * nx + ny * ny + nz * nz) as f64).sqrt();
    (0..occ.len())
        .map(|i| {
            let (others, sign) = if occ.occupied[i] {
                (&free, -1.0)
            } else {
                (&occupied, 1.0)
            };
            let a = idx(i);
            let d2 = others
                .iter()
                .map(|b| (0..3).map(|k| (a[k] - b[k]).pow(2)).sum::<i64>())
                .min();
            match d2 {
                Some(d2) => sign * ((d2 as f64).sqrt() * res - 0.5 * res),
                None => sign * diag,
            }
        })
        .collect()
}

/// Largest absolute difference between `esdf` and the brute-force field of
/// `occ`, or `None` if the grid is too large for the oracle.
pub fn verify_esdf(occ: &OccupancyGrid, esdf: &EsdfGrid) -> Option<f64> {
    if occ.len() > ORACLE_MAX_CELLS || esdf.values.len() != occ.len() {
        return None;
    }
    Some(
        brute_force_esdf(occ)
            .iter()
            .zip(&esdf.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_esdf;
    use crate::model::Vec3;

    #[test]
    fn single_obstacle_cell_distances() {
        let mut occ = OccupancyGrid::new(Vec3::zeros(), 1.0, [5, 1, 1]);
        occ.set(0, 0, 0, true);
        assert_eq!(brute_force_esdf(&occ), vec![-0.5, 0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn agrees_with_fast_transform() {
        let mut occ = OccupancyGrid::new(Vec3::zeros(), 0.25, [6, 5, 4]);
        occ.set(2, 2, 1, true);
        occ.set(5, 0, 3, true);
        let e = build_esdf(&occ).unwrap();
        assert_eq!(verify_esdf(&occ, &e), Some(0.0));
        let big = OccupancyGrid::new(Vec3::zeros(), 1.0, [33, 32, 32]);
        assert!(verify_esdf(&big, &e).is_none());
    }
}
