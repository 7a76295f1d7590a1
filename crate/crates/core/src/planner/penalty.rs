//! Per-sample penalties on the flat outputs with reverse-mode gradients.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::smoothing::smooth_ramp;
use super::PlannerConfig;
use crate::env::{EsdfGrid, Query};
use crate::flatness::{
    body_rate, body_rate_adjoint, body_z, body_z_adjoint, layout, rho_derivatives,
    rho_derivatives_adjoint, FlatSample,
};
use crate::model::{e3, SystemConfig, Vec3};

/// Thrust norm below which the attitude chain is skipped for a barrier.
pub const THRUST_GUARD: f64 = 1e-6;
const HOPF_GUARD: f64 = 1e-3;

/// Signed distance with gradient; positive in free space.
pub trait DistanceField: Sync {
    fn query(&self, x: &Vec3) -> Query;
}

impl DistanceField for EsdfGrid {
    fn query(&self, x: &Vec3) -> Query {
        EsdfGrid::query(self, x)
    }
}

/// Union of spheres with an exact, smooth distance away from the centers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SphereField {
    pub spheres: Vec<(Vec3, f64)>,
}

impl DistanceField for SphereField {
    fn query(&self, x: &Vec3) -> Query {
        let mut best = Query {
            distance: f64::INFINITY,
            gradient: Vec3::zeros(),
            out_of_bounds: false,
        };
        for (c, r) in &self.spheres {
            let d = x - c;
            let n = d.norm();
            if n - r < best.distance {
                best.distance = n - r;
                best.gradient = if n > 0.0 { d / n } else { Vec3::zeros() };
            }
        }
        best
    }
}

/// Which penalty terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltySet {
    pub obstacle: bool,
    pub reciprocal: bool,
    pub velocity: bool,
    pub thrust: bool,
    pub tilt: bool,
    pub body_rate: bool,
    pub coupling: bool,
}

impl PenaltySet {
    pub fn all() -> Self {
        Self {
            obstacle: true,
            reciprocal: true,
            velocity: true,
            thrust: true,
            tilt: true,
            body_rate: true,
            coupling: true,
        }
    }

    pub fn none() -> Self {
        Self {
            obstacle: false,
            reciprocal: false,
            velocity: false,
            thrust: false,
            tilt: false,
            body_rate: false,
            coupling: false,
        }
    }

    pub fn only(name: &str) -> Option<Self> {
        let mut s = Self::none();
        match name {
            "obstacle" => s.obstacle = true,
            "reciprocal" => s.reciprocal = true,
            "velocity" => s.velocity = true,
            "thrust" => s.thrust = true,
            "tilt" => s.tilt = true,
            "body_rate" => s.body_rate = true,
            "coupling" => s.coupling = true,
            _ => return None,
        }
        Some(s)
    }

    fn attitude(&self) -> bool {
        self.thrust || self.tilt || self.body_rate
    }
}

impl Default for PenaltySet {
    fn default() -> Self {
        Self::all()
    }
}

/// Weighted cost contributions by term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    pub energy: f64,
    pub time: f64,
    pub obstacle: f64,
    pub reciprocal: f64,
    pub velocity: f64,
    pub thrust: f64,
    pub tilt: f64,
    pub body_rate: f64,
    pub coupling: f64,
}

impl Terms {
    pub fn total(&self) -> f64 {
        self.energy + self.time + self.penalties()
    }

    /// Sum of the constraint penalties (everything except energy and time).
    pub fn penalties(&self) -> f64 {
        self.obstacle
            + self.reciprocal
            + self.velocity
            + self.thrust
            + self.tilt
            + self.body_rate
            + self.coupling
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            energy: self.energy * k,
            time: self.time * k,
            obstacle: self.obstacle * k,
            reciprocal: self.reciprocal * k,
            velocity: self.velocity * k,
            thrust: self.thrust * k,
            tilt: self.tilt * k,
            body_rate: self.body_rate * k,
            coupling: self.coupling * k,
        }
    }
}

impl Add for Terms {
    type Output = Terms;
    fn add(self, o: Terms) -> Terms {
        Terms {
            energy: self.energy + o.energy,
            time: self.time + o.time,
            obstacle: self.obstacle + o.obstacle,
            reciprocal: self.reciprocal + o.reciprocal,
            velocity: self.velocity + o.velocity,
            thrust: self.thrust + o.thrust,
            tilt: self.tilt + o.tilt,
            body_rate: self.body_rate + o.body_rate,
            coupling: self.coupling + o.coupling,
        }
    }
}

impl AddAssign for Terms {
    fn add_assign(&mut self, o: Terms) {
        *self = *self + o;
    }
}

/// Everything a sample penalty needs besides the sample itself.
pub struct PenaltyContext<'a> {
    pub cfg: &'a PlannerConfig,
    pub sys: &'a SystemConfig,
    pub field: Option<&'a dyn DistanceField>,
    pub set: PenaltySet,
}

#[derive(Clone, Copy)]
struct RobotAdj {
    theta: [f64; 4],
    phi: [f64; 4],
    rho: [Vec3; 4],
    rho_bar: [Vec3; 4],
    tension: f64,
    tension_bar: [f64; 2],
    yaw_bar: [f64; 2],
}

/// Evaluates all active penalties at one flat sample (orders 0..=3 used).
/// `grad` is indexed `order * D + channel` over at least four orders and
/// receives `dJ/dZ` (accumulated).
pub fn sample_penalty(z: &FlatSample, ctx: &PenaltyContext, grad: &mut [f64]) -> Terms {
    let cfg = ctx.cfg;
    let sys = ctx.sys;
    let n_robots = z.n_robots;
    let dch = layout::channels(n_robots);
    let l = sys.cable_length;
    let m = sys.robot_mass;
    let mu = cfg.mu;
    let set = ctx.set;
    let p: [Vec3; 4] = std::array::from_fn(|k| {
        if k < z.orders() {
            z.payload(k)
        } else {
            Vec3::zeros()
        }
    });
    let mut p_bar = [Vec3::zeros(); 4];
    let mut terms = Terms::default();

    let obstacle = |x: &Vec3, bound: f64, terms: &mut Terms| -> Option<Vec3> {
        let q = ctx.field?.query(x);
        let (v, dv) = smooth_ramp(bound - q.distance, mu);
        terms.obstacle += cfg.lambda_obstacle * v;
        (dv != 0.0).then(|| -q.gradient * (cfg.lambda_obstacle * dv))
    };

    if set.obstacle {
        if let Some(g) = obstacle(&p[0], cfg.d_payload, &mut terms) {
            p_bar[0] += g;
        }
    }

    let mut robots: Vec<RobotAdj> = Vec::with_capacity(n_robots);
    for n in 0..n_robots {
        let theta = z.jet(layout::pitch(n));
        let phi = z.jet(layout::azimuth(n));
        let ften = z.jet(layout::tension(n));
        let yaw = z.jet(layout::yaw(n));
        let rho = rho_derivatives(&theta, &phi);
        let mut r = RobotAdj {
            theta,
            phi,
            rho,
            rho_bar: [Vec3::zeros(); 4],
            tension: ften[0],
            tension_bar: [0.0; 2],
            yaw_bar: [0.0; 2],
        };

        if set.obstacle && ctx.field.is_some() {
            if let Some(g) = obstacle(&(p[0] + rho[0] * l), cfg.d_robot, &mut terms) {
                p_bar[0] += g;
                r.rho_bar[0] += g * l;
            }
            let k_total = cfg.cable_samples;
            for k in 1..=k_total {
                let arc = l * k as f64 / (k_total + 1) as f64;
                if let Some(g) = obstacle(&(p[0] + rho[0] * arc), cfg.d_cable, &mut terms) {
                    p_bar[0] += g;
                    r.rho_bar[0] += g * arc;
                }
            }
        }

        if set.velocity {
            let v = p[1] + rho[1] * l;
            let (c, dc) = smooth_ramp(v.norm_squared() - cfg.v_max * cfg.v_max, mu);
            terms.velocity += cfg.lambda_velocity * c;
            if dc != 0.0 {
                let g = v * (2.0 * cfg.lambda_velocity * dc);
                p_bar[1] += g;
                r.rho_bar[1] += g * l;
            }
        }

        if set.attitude() {
            let f = p[2] + rho[2] * l + e3() * sys.gravity + rho[0] * (ften[0] / m);
            let f_dot = p[3] + rho[3] * l + (rho[0] * ften[1] + rho[1] * ften[0]) / m;
            let fn_ = f.norm();
            let mut f_bar = Vec3::zeros();
            let mut f_dot_bar = Vec3::zeros();
            if fn_ < THRUST_GUARD {
                // barrier: push the thrust norm back up, skip the attitude chain
                if set.thrust {
                    terms.thrust += cfg.lambda_thrust * (cfg.f_min * cfg.f_min - fn_ * fn_);
                    f_bar -= f * (2.0 * cfg.lambda_thrust);
                }
            } else {
                if set.thrust {
                    let f_avg = 0.5 * (cfg.f_max + cfg.f_min);
                    let f_rag = 0.5 * (cfg.f_max - cfg.f_min);
                    let e = fn_ - f_avg;
                    let (c, dc) = smooth_ramp(e * e - f_rag * f_rag, mu);
                    terms.thrust += cfg.lambda_thrust * c;
                    if dc != 0.0 {
                        f_bar += f * (2.0 * cfg.lambda_thrust * dc * e / fn_);
                    }
                }
                let (zb, zb_dot) = body_z(&f, &f_dot);
                let mut z_bar = Vec3::zeros();
                let mut z_dot_bar = Vec3::zeros();
                if set.tilt {
                    let z3 = zb.z.clamp(-1.0, 1.0);
                    let (c, dc) = smooth_ramp(z3.acos() - cfg.tilt_max, mu);
                    terms.tilt += cfg.lambda_tilt * c;
                    if dc != 0.0 {
                        let s = (1.0 - z3 * z3).max(1e-12).sqrt();
                        z_bar.z -= cfg.lambda_tilt * dc / s;
                    }
                }
                if set.body_rate && zb.z > -1.0 + HOPF_GUARD {
                    let w = body_rate(&zb, &zb_dot, yaw[0], yaw[1])
                        .expect("guarded above the singularity");
                    let (c, dc) = smooth_ramp(w.norm_squared() - cfg.rate_max * cfg.rate_max, mu);
                    terms.body_rate += cfg.lambda_rate * c;
                    if dc != 0.0 {
                        let w_bar = w * (2.0 * cfg.lambda_rate * dc);
                        let (zb_b, zd_b, psi_b, psid_b) =
                            body_rate_adjoint(&zb, &zb_dot, yaw[0], &w_bar);
                        z_bar += zb_b;
                        z_dot_bar += zd_b;
                        r.yaw_bar[0] += psi_b;
                        r.yaw_bar[1] += psid_b;
                    }
                }
                if z_bar != Vec3::zeros() || z_dot_bar != Vec3::zeros() {
                    let (fb, fdb) = body_z_adjoint(&f, &f_dot, &z_bar, &z_dot_bar);
                    f_bar += fb;
                    f_dot_bar += fdb;
                }
            }
            p_bar[2] += f_bar;
            r.rho_bar[2] += f_bar * l;
            r.rho_bar[0] += f_bar * (ften[0] / m);
            r.tension_bar[0] += rho[0].dot(&f_bar) / m;
            p_bar[3] += f_dot_bar;
            r.rho_bar[3] += f_dot_bar * l;
            r.rho_bar[0] += f_dot_bar * (ften[1] / m);
            r.rho_bar[1] += f_dot_bar * (ften[0] / m);
            r.tension_bar[1] += rho[0].dot(&f_dot_bar) / m;
            r.tension_bar[0] += rho[1].dot(&f_dot_bar) / m;
        }
        robots.push(r);
    }

    if set.reciprocal {
        let d2 = cfg.d_reciprocal * cfg.d_reciprocal;
        for i in 0..n_robots {
            for j in i + 1..n_robots {
                let d = (robots[i].rho[0] - robots[j].rho[0]) * l;
                let (c, dc) = smooth_ramp(d2 - d.norm_squared(), mu);
                terms.reciprocal += cfg.lambda_reciprocal * c;
                if dc != 0.0 {
                    let g = d * (2.0 * l * cfg.lambda_reciprocal * dc);
                    robots[i].rho_bar[0] -= g;
                    robots[j].rho_bar[0] += g;
                }
            }
        }
    }

    if set.coupling {
        let ml = sys.payload_mass;
        let mut res = p[2] + e3() * sys.gravity;
        for r in &robots {
            res -= r.rho[0] * (r.tension / ml);
        }
        let norm = res.norm();
        let (c, dc) = smooth_ramp(norm, mu);
        terms.coupling += cfg.lambda_coupling * c;
        if dc != 0.0 && norm > 0.0 {
            let u = res * (cfg.lambda_coupling * dc / norm);
            p_bar[2] += u;
            for r in robots.iter_mut() {
                r.rho_bar[0] -= u * (r.tension / ml);
                r.tension_bar[0] -= r.rho[0].dot(&u) / ml;
            }
        }
    }

    for k in 0..4 {
        for a in 0..3 {
            grad[k * dch + a] += p_bar[k][a];
        }
    }
    for (n, r) in robots.iter().enumerate() {
        let touched = r.rho_bar.iter().any(|v| *v != Vec3::zeros());
        if touched {
            let (tb, pb) = rho_derivatives_adjoint(&r.theta, &r.phi, &r.rho_bar);
            for k in 0..4 {
                grad[k * dch + layout::pitch(n)] += tb[k];
                grad[k * dch + layout::azimuth(n)] += pb[k];
            }
        }
        for k in 0..2 {
            grad[k * dch + layout::tension(n)] += r.tension_bar[k];
            grad[k * dch + layout::yaw(n)] += r.yaw_bar[k];
        }
    }
    terms
}
