//! Occupancy grids, the signed distance field built from them, and
//! trilinear distance/gradient queries.

mod edt;
mod io;
mod map;
mod oracle;

pub use edt::squared_distance;
pub use io::{load_points, parse_ply, parse_xyz};
pub use map::{MapSpec, Obstacle};
pub use oracle::{brute_force_esdf, verify_esdf, ORACLE_MAX_CELLS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vec3;

/// Boolean voxel grid. Cell `(i, j, k)` is centered at
/// `origin + resolution * (i, j, k)`; storage is x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            origin,
            resolution,
            dims,
            occupied: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Grid covering the box `[lo, hi]` with cell centers on the lattice
    /// anchored at `lo`.
    pub fn covering(lo: Vec3, hi: Vec3, resolution: f64) -> Self {
        let n = |a: f64, b: f64| (((b - a) / resolution).round() as usize + 1).max(1);
        Self::new(
            lo,
            resolution,
            [n(lo.x, hi.x), n(lo.y, hi.y), n(lo.z, hi.z)],
        )
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.resolution
    }

    /// Nearest cell to a world point, if inside the grid.
    pub fn cell_of(&self, x: &Vec3) -> Option<[usize; 3]> {
        let u = (x - self.origin) / self.resolution;
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = u[a].round();
            if r < 0.0 || r >= self.dims[a] as f64 {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, occ: bool) {
        let idx = self.index(i, j, k);
        self.occupied[idx] = occ;
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied[self.index(i, j, k)]
    }

    /// Marks the cell nearest to each point; points outside are ignored.
    /// Returns the number of points that landed inside.
    pub fn mark_points(&mut self, points: &[Vec3]) -> usize {
        let mut inside = 0;
        for p in points {
            if let Some([i, j, k]) = self.cell_of(p) {
                self.set(i, j, k, true);
                inside += 1;
            }
        }
        inside
    }

    /// Voxelizes a point cloud into a grid spanning its bounding box grown
    /// by `padding` on every side.
    pub fn from_points(points: &[Vec3], resolution: f64, padding: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let pad = Vec3::repeat(padding);
        let mut grid = Self::covering(lo - pad, hi + pad, resolution);
        grid.mark_points(points);
        Ok(grid)
    }
}

/// Result of a distance-field query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub distance: f64,
    pub gradient: Vec3,
    /// The point lay outside the grid; the value was extrapolated.
    pub out_of_bounds: bool,
}

/// Signed distance field: positive in free space, negative inside
/// obstacles, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdfGrid {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

/// Builds the signed distance field of an occupancy grid. Free cells hold
/// the distance from their center to the nearest occupied center minus half
/// a cell; occupied cells hold the negated distance to the nearest free
/// center minus half a cell. Grids without any occupied (or free) cell are
/// capped at plus (or minus) the domain diagonal.
pub fn build_esdf(occ: &OccupancyGrid) -> Result<EsdfGrid> {
    if occ.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let res = occ.resolution;
    let [nx, ny, nz] = occ.dims;
    let diag = res * (((nx * nx + ny * ny + nz * nz) as f64).sqrt());
    let free: Vec<bool> = occ.occupied.iter().map(|o| !o).collect();
    let to_occ = squared_distance(&occ.occupied, occ.dims);
    let to_free = squared_distance(&free, occ.dims);
    let values = (0..occ.len())
        .map(|i| {
            if occ.occupied[i] {
                match &to_free {
                    Some(d) => -(d[i].sqrt() * res - 0.5 * res),
                    None => -diag,
                }
            } else {
                match &to_occ {
                    Some(d) => d[i].sqrt() * res - 0.5 * res,
                    None => diag,
                }
            }
        })
        .collect();
    Ok(EsdfGrid {
        origin: occ.origin,
        resolution: res,
        dims: occ.dims,
        values,
    })
}

impl EsdfGrid {
    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// Lower and upper corners of the region spanned by cell centers.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let span = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        ) * self.resolution;
        (self.origin, self.origin + span)
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        let (lo, hi) = self.bounds();
        (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a])
    }

    /// Trilinear value and its analytic gradient inside the grid. Outside,
    /// the boundary value plus the distance to the grid box is returned.
    pub fn query(&self, x: &Vec3) -> Query {
        let (lo, hi) = self.bounds();
        let clamped = x.sup(&lo).inf(&hi);
        let (e, g) = self.trilinear(&clamped);
        let out = x - clamped;
        let d = out.norm();
        if d > 0.0 {
            let mut grad = out / d;
            // tangential part of the boundary gradient still applies
            for a in 0..3 {
                if out[a] == 0.0 {
                    grad[a] += g[a];
                }
            }
            Query {
                distance: e + d,
                gradient: grad,
                out_of_bounds: true,
            }
        } else {
            Query {
                distance: e,
                gradient: g,
                out_of_bounds: false,
            }
        }
    }

    pub fn distance(&self, x: &Vec3) -> f64 {
        self.query(x).distance
    }

    fn trilinear(&self, x: &Vec3) -> (f64, Vec3) {
        let u = (x - self.origin) / self.resolution;
        let mut i0 = [0usize; 3];
        let mut i1 = [0usize; 3];
        let mut fr = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                continue;
            }
            let base = (u[a].floor().max(0.0) as usize).min(n - 2);
            i0[a] = base;
            i1[a] = base + 1;
            fr[a] = (u[a] - base as f64).clamp(0.0, 1.0);
        }
        let mut c = [[[0.0; 2]; 2]; 2];
        for (dx, cx) in c.iter_mut().enumerate() {
            for (dy, cy) in cx.iter_mut().enumerate() {
                for (dz, v) in cy.iter_mut().enumerate() {
                    let ii = if dx == 0 { i0[0] } else { i1[0] };
                    let jj = if dy == 0 { i0[1] } else { i1[1] };
                    let kk = if dz == 0 { i0[2] } else { i1[2] };
                    *v = self.value(ii, jj, kk);
                }
            }
        }
        let [fx, fy, fz] = fr;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(c[0][0][0], c[1][0][0], fx);
        let c10 = lerp(c[0][1][0], c[1][1][0], fx);
        let c01 = lerp(c[0][0][1], c[1][0][1], fx);
        let c11 = lerp(c[0][1][1], c[1][1][1], fx);
        let c0 = lerp(c00, c10, fy);
        let c1 = lerp(c01, c11, fy);
        let value = lerp(c0, c1, fz);

        let dx00 = c[1][0][0] - c[0][0][0];
        let dx10 = c[1][1][0] - c[0][1][0];
        let dx01 = c[1][0][1] - c[0][0][1];
        let dx11 = c[1][1][1] - c[0][1][1];
        let gx = lerp(lerp(dx00, dx10, fy), lerp(dx01, dx11, fy), fz);
        let gy = lerp(c10 - c00, c11 - c01, fz);
        let gz = c1 - c0;
        let mut grad = Vec3::new(gx, gy, gz) / self.resolution;
        for a in 0..3 {
            if self.dims[a] == 1 {
                grad[a] = 0.0;
            }
        }
        (value, grad)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests;
