use serde::{Deserialize, Serialize};

use super::{build_esdf, EsdfGrid, OccupancyGrid};
use crate::error::{Error, Result};
use crate::model::Vec3;

/// Procedural obstacle primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Obstacle {
    /// Vertical cylinder.
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
    /// Axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Wall in the plane `x = const` spanning `[y_min, y_max] x [z_min, z_max]`
    /// with a full-height vertical slot of width `gap_width` at `gap_center`.
    GapWall {
        x: f64,
        thickness: f64,
        y_min: f64,
        y_max: f64,
        z_min: f64,
        z_max: f64,
        gap_center: f64,
        gap_width: f64,
    },
}

fn box_signed_distance(x: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let c = (lo + hi) * 0.5;
    let h = (hi - lo) * 0.5;
    let q = (x - c).abs() - h;
    let outside = q.sup(&Vec3::zeros()).norm();
    let inside = q.max().min(0.0);
    outside + inside
}

impl Obstacle {
    fn boxes(&self) -> Vec<(Vec3, Vec3)> {
        match *self {
            Obstacle::Box { min, max } => vec![(Vec3::from(min), Vec3::from(max))],
            Obstacle::GapWall {
                x,
                thickness,
                y_min,
                y_max,
                z_min,
                z_max,
                gap_center,
                gap_width,
            } => {
                let x0 = x - 0.5 * thickness;
                let x1 = x + 0.5 * thickness;
                let g0 = gap_center - 0.5 * gap_width;
                let g1 = gap_center + 0.5 * gap_width;
                let mut parts = Vec::new();
                if g0 > y_min {
                    parts.push((Vec3::new(x0, y_min, z_min), Vec3::new(x1, g0, z_max)));
                }
                if g1 < y_max {
                    parts.push((Vec3::new(x0, g1, z_min), Vec3::new(x1, y_max, z_max)));
                }
                parts
            }
            Obstacle::Cylinder { .. } => Vec::new(),
        }
    }

    /// Exact signed distance to the primitive (negative inside).
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        match *self {
            Obstacle::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => {
                let radial =
                    ((x.x - center[0]).powi(2) + (x.y - center[1]).powi(2)).sqrt() - radius;
                let zc = 0.5 * (z_min + z_max);
                let vertical = (x.z - zc).abs() - 0.5 * (z_max - z_min);
                let outside = (radial.max(0.0).powi(2) + vertical.max(0.0).powi(2)).sqrt();
                outside + radial.max(vertical).min(0.0)
            }
            _ => self
                .boxes()
                .iter()
                .map(|(lo, hi)| box_signed_distance(x, lo, hi))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.signed_distance(x) <= 0.0
    }
}

/// Map description: bounds, resolution and obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Optional point cloud (xyz or ASCII PLY) merged into the grid.
    #[serde(default)]
    pub point_cloud: Option<String>,
    /// Treat the floor plane `z = min.z` as an obstacle.
    #[serde(default)]
    pub floor: bool,
}

fn default_resolution() -> f64 {
    0.1
}

impl MapSpec {
    pub fn new(min: [f64; 3], max: [f64; 3], resolution: f64) -> Self {
        Self {
            min,
            max,
            resolution,
            obstacles: Vec::new(),
            point_cloud: None,
            floor: false,
        }
    }

    pub fn with_obstacle(mut self, o: Obstacle) -> Self {
        self.obstacles.push(o);
        self
    }

    /// Exact signed distance to the nearest procedural obstacle.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        let mut d = self
            .obstacles
            .iter()
            .map(|o| o.signed_distance(x))
            .fold(f64::INFINITY, f64::min);
        if self.floor {
            d = d.min(x.z - self.min[2]);
        }
        d
    }

    pub fn rasterize(&self) -> Result<OccupancyGrid> {
        if !(self.resolution > 0.0) || (0..3).any(|a| self.max[a] < self.min[a]) {
            return Err(Error::InvalidConfig(
                "map bounds or resolution invalid".into(),
            ));
        }
        let mut grid =
            OccupancyGrid::covering(Vec3::from(self.min), Vec3::from(self.max), self.resolution);
        let [nx, ny, nz] = grid.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = grid.cell_center(i, j, k);
                    let occ =
                        self.obstacles.iter().any(|o| o.contains(&c)) || (self.floor && k == 0);
                    if occ {
                        grid.set(i, j, k, true);
                    }
                }
            }
        }
        if let Some(path) = &self.point_cloud {
            let pts = super::load_points(path)?;
            grid.mark_points(&pts);
        }
        Ok(grid)
    }

    pub fn esdf(&self) -> Result<EsdfGrid> {
        build_esdf(&self.rasterize()?)
    }
}
