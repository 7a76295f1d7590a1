//! Front-end search: A* over payload position and formation scale, with the
//! system abstracted as a solid pyramid whose apex is the payload and whose
//! base disk holds the robots.

use std::collections::HashMap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::env::EsdfGrid;
use crate::error::{Error, Result};
use crate::model::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathfindConfig {
    /// Lattice spacing [m].
    pub step: f64,
    /// Base circumradius of each scale level, ascending [m].
    pub levels: Vec<f64>,
    /// Required distance-field value at every sample of the solid [m].
    pub margin: f64,
    /// Extent of the solid below the payload point [m].
    pub below_clearance: f64,
    /// Cost per level change [m].
    pub level_cost: f64,
    /// Node expansion budget before giving up.
    pub max_expansions: usize,
}

impl Default for PathfindConfig {
    fn default() -> Self {
        Self {
            step: 0.2,
            levels: linspace(0.3, 0.8, 4),
            margin: 0.1,
            below_clearance: 0.1,
            level_cost: 0.5,
            max_expansions: 400_000,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

impl PathfindConfig {
    /// Levels spanning from the tightest formation a cable pitch limit
    /// allows (with a 5% pitch margin) up to the default widest level, with
    /// a margin matching the default cable and payload clearance.
    pub fn for_pitch_limit(cable_length: f64, pitch_max: f64) -> Self {
        let base = Self::default();
        let widest = *base.levels.last().unwrap();
        let tightest = (cable_length * (0.95 * pitch_max).cos()).min(0.9 * widest);
        Self {
            levels: linspace(tightest, widest, base.levels.len()),
            margin: 0.2,
            ..base
        }
    }

    /// Scale of a level relative to the largest one.
    pub fn gamma(&self, level: usize) -> f64 {
        self.levels[level] / self.levels[self.levels.len() - 1]
    }

    pub fn validate(&self, cable_length: f64) -> Result<()> {
        if !(self.step > 0.0) || self.levels.is_empty() || self.margin < 0.0 {
            return Err(Error::InvalidConfig(
                "pathfind step, levels or margin invalid".into(),
            ));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) || self.levels[0] <= 0.0 {
            return Err(Error::InvalidConfig(
                "pathfind levels must be positive and ascending".into(),
            ));
        }
        if *self.levels.last().unwrap() >= cable_length {
            return Err(Error::InvalidConfig(
                "base radius must be shorter than the cable".into(),
            ));
        }
        Ok(())
    }
}

/// Payload position and formation scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub payload: Vec3,
    pub level: usize,
    pub gamma: f64,
    /// Base circumradius [m].
    pub radius: f64,
}

impl PyramidConfig {
    /// Cable pitch that realizes the base radius.
    pub fn pitch(&self, cable_length: f64) -> f64 {
        (self.radius / cable_length).clamp(-1.0, 1.0).acos()
    }
}

/// Checks the solid pyramid (circumscribed-disk base, apex at the payload,
/// extended `below_clearance` under it) against the distance field, sampling
/// at the field resolution. Samples outside the field count as collisions.
pub fn pyramid_collision_free(
    payload: &Vec3,
    radius: f64,
    cable_length: f64,
    esdf: &EsdfGrid,
    cfg: &PathfindConfig,
) -> bool {
    let res = esdf.resolution;
    let h = (cable_length * cable_length - radius * radius)
        .max(0.0)
        .sqrt();
    let free = |x: &Vec3| {
        let q = esdf.query(x);
        !q.out_of_bounds && q.distance > cfg.margin
    };
    let z0 = -cfg.below_clearance;
    let layers = ((h - z0) / res).ceil().max(1.0) as usize;
    for l in 0..=layers {
        let z = z0 + (h - z0) * l as f64 / layers as f64;
        let r = if z <= 0.0 { 0.0 } else { radius * z / h };
        let c = payload + Vec3::new(0.0, 0.0, z);
        let q = esdf.query(&c);
        if q.out_of_bounds {
            return false;
        }
        if q.distance > r + cfg.margin {
            continue;
        }
        if q.distance <= cfg.margin {
            return false;
        }
        let rings = (r / res).ceil() as usize;
        for i in 1..=rings {
            let ri = r * i as f64 / rings as f64;
            let n = ((2.0 * std::f64::consts::PI * ri / res).ceil() as usize).max(6);
            for k in 0..n {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                if !free(&(c + Vec3::new(ri * a.cos(), ri * a.sin(), 0.0))) {
                    return false;
                }
            }
        }
    }
    true
}

/// Lattice node: integer offsets from the start position and a level.
pub type Node = (i32, i32, i32, usize);

/// Search graph shared by the A* front-end and test oracles.
pub struct Lattice<'a> {
    pub origin: Vec3,
    pub cfg: &'a PathfindConfig,
    pub esdf: &'a EsdfGrid,
    pub cable_length: f64,
    cache: HashMap<Node, bool>,
    pub expansions: usize,
}

impl<'a> Lattice<'a> {
    pub fn new(
        origin: Vec3,
        cfg: &'a PathfindConfig,
        esdf: &'a EsdfGrid,
        cable_length: f64,
    ) -> Self {
        Self {
            origin,
            cfg,
            esdf,
            cable_length,
            cache: HashMap::new(),
            expansions: 0,
        }
    }

    pub fn position(&self, n: &Node) -> Vec3 {
        self.origin + Vec3::new(n.0 as f64, n.1 as f64, n.2 as f64) * self.cfg.step
    }

    pub fn is_free(&mut self, n: &Node) -> bool {
        if let Some(&v) = self.cache.get(n) {
            return v;
        }
        let p = self.position(n);
        let v = self.esdf.contains(&p)
            && pyramid_collision_free(
                &p,
                self.cfg.levels[n.3],
                self.cable_length,
                self.esdf,
                self.cfg,
            );
        self.cache.insert(*n, v);
        v
    }

    /// Collision-free neighbors: 26 spatial moves at the same level and one
    /// level up or down in place.
    pub fn successors(&mut self, n: &Node) -> Vec<(Node, f64)> {
        self.expansions += 1;
        let mut out = Vec::with_capacity(28);
        if self.expansions > self.cfg.max_expansions {
            return out;
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let m = (n.0 + dx, n.1 + dy, n.2 + dz, n.3);
                    if self.is_free(&m) {
                        let len = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * self.cfg.step;
                        out.push((m, len));
                    }
                }
            }
        }
        for l in [n.3.wrapping_sub(1), n.3 + 1] {
            if l < self.cfg.levels.len() {
                let m = (n.0, n.1, n.2, l);
                if self.is_free(&m) {
                    out.push((m, self.cfg.level_cost));
                }
            }
        }
        out
    }

    pub fn config(&self, n: &Node) -> PyramidConfig {
        PyramidConfig {
            payload: self.position(n),
            level: n.3,
            gamma: self.cfg.gamma(n.3),
            radius: self.cfg.levels[n.3],
        }
    }

    /// Lattice cell nearest to `x` at `level`.
    pub fn node_at(&self, x: &Vec3, level: usize) -> Node {
        let u = (x - self.origin) / self.cfg.step;
        (
            u.x.round() as i32,
            u.y.round() as i32,
            u.z.round() as i32,
            level,
        )
    }
}

/// Front-end result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub nodes: Vec<PyramidConfig>,
    /// Lattice path cost (length plus level-change cost).
    pub cost: f64,
}

impl PlannedPath {
    pub fn length(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| (w[1].payload - w[0].payload).norm())
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A* from `start` to `goal`. The search starts at the largest
/// collision-free level at `start` and succeeds at the lattice cell nearest
/// `goal` (any level); the final node is then moved onto `goal` exactly.
pub fn plan_path(
    start: &Vec3,
    goal: &Vec3,
    esdf: &EsdfGrid,
    cable_length: f64,
    cfg: &PathfindConfig,
) -> Result<PlannedPath> {
    cfg.validate(cable_length)?;
    let mut lat = Lattice::new(*start, cfg, esdf, cable_length);
    let start_level = (0..cfg.levels.len())
        .rev()
        .find(|&l| lat.is_free(&(0, 0, 0, l)))
        .ok_or(Error::NoPath)?;
    let target = lat.node_at(goal, 0);
    let step = cfg.step;
    let result = pathfinding::prelude::astar(
        &(0, 0, 0, start_level),
        |n| {
            lat.successors(n)
                .into_iter()
                .map(|(m, c)| (m, OrderedFloat(c)))
                .collect::<Vec<_>>()
        },
        |n| {
            let d = Vec3::new(
                (n.0 - target.0) as f64,
                (n.1 - target.1) as f64,
                (n.2 - target.2) as f64,
            );
            OrderedFloat(d.norm() * step)
        },
        |n| (n.0, n.1, n.2) == (target.0, target.1, target.2),
    );
    let (nodes, cost) = result.ok_or(Error::NoPath)?;
    let lat = Lattice::new(*start, cfg, esdf, cable_length);
    let mut configs: Vec<PyramidConfig> = nodes.iter().map(|n| lat.config(n)).collect();
    if let Some(last) = configs.last_mut() {
        if pyramid_collision_free(goal, last.radius, cable_length, esdf, cfg) {
            last.payload = *goal;
        }
    }
    Ok(PlannedPath {
        nodes: configs,
        cost: cost.0,
    })
}

/// Drops intermediate nodes that continue a straight run at the same level.
pub fn simplify(path: &PlannedPath) -> Vec<PyramidConfig> {
    let n = path.nodes.len();
    if n <= 2 {
        return path.nodes.clone();
    }
    let mut out = vec![path.nodes[0]];
    for i in 1..n - 1 {
        let (a, b, c) = (&path.nodes[i - 1], &path.nodes[i], &path.nodes[i + 1]);
        let d1 = b.payload - a.payload;
        let d2 = c.payload - b.payload;
        let straight =
            d1.norm() > 0.0 && d2.norm() > 0.0 && (d1.normalize() - d2.normalize()).norm() < 1e-9;
        if !(straight && a.level == b.level && b.level == c.level) {
            out.push(*b);
        }
    }
    out.push(path.nodes[n - 1]);
    out
}

/// Greedy line-of-sight shortcutting: from each kept node, jump to the
/// farthest later node whose straight connection keeps the solid free at
/// the tightest formation among the skipped nodes.
pub fn shortcut(
    nodes: &[PyramidConfig],
    esdf: &EsdfGrid,
    cable_length: f64,
    cfg: &PathfindConfig,
) -> Vec<PyramidConfig> {
    if nodes.len() <= 2 {
        return nodes.to_vec();
    }
    let segment_free = |a: &PyramidConfig, b: &PyramidConfig, radius: f64| {
        let len = (b.payload - a.payload).norm();
        let n = ((len / (0.5 * cfg.step)).ceil() as usize).max(1);
        (1..n).all(|k| {
            let x = a.payload + (b.payload - a.payload) * (k as f64 / n as f64);
            pyramid_collision_free(&x, radius, cable_length, esdf, cfg)
        })
    };
    let mut out = vec![nodes[0]];
    let mut i = 0;
    while i < nodes.len() - 1 {
        let mut next = i + 1;
        let mut tight = nodes[i].radius.min(nodes[i + 1].radius);
        let mut j = i + 2;
        let mut tight_j = tight;
        while j < nodes.len() {
            tight_j = tight_j.min(nodes[j].radius);
            if !segment_free(&nodes[i], &nodes[j], tight_j) {
                break;
            }
            next = j;
            tight = tight_j;
            j += 1;
        }
        let level = nodes[i..=next]
            .iter()
            .min_by(|a, b| a.radius.total_cmp(&b.radius))
            .unwrap()
            .level;
        let mut node = nodes[next];
        if node.radius > tight {
            node.level = level;
            node.radius = tight;
            node.gamma = cfg.gamma(level);
        }
        out.push(node);
        i = next;
    }
    out
}

/// Points at `count + 1` equally spaced arclengths along the payload path
/// (both ends included). Each point takes the tighter formation of the two
/// nodes around it so narrow passages stay feasible.
pub fn resample_by_arclength(nodes: &[PyramidConfig], count: usize) -> Vec<PyramidConfig> {
    assert!(!nodes.is_empty() && count >= 1);
    let mut cum = vec![0.0];
    for w in nodes.windows(2) {
        cum.push(cum.last().unwrap() + (w[1].payload - w[0].payload).norm());
    }
    let total = *cum.last().unwrap();
    if nodes.len() == 1 || total == 0.0 {
        return vec![nodes[0]; count + 1];
    }
    (0..=count)
        .map(|i| {
            let s = total * i as f64 / count as f64;
            let k = cum.partition_point(|&c| c < s).clamp(1, nodes.len() - 1);
            let (a, b) = (&nodes[k - 1], &nodes[k]);
            let seg = cum[k] - cum[k - 1];
            let t = if seg > 0.0 {
                ((s - cum[k - 1]) / seg).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let tight = if a.radius <= b.radius { a } else { b };
            PyramidConfig {
                payload: a.payload + (b.payload - a.payload) * t,
                ..*tight
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
