//! Flatness maps from the extended flat output (payload path, cable angles,
//! tensions, yaw) to each robot's thrust, attitude and body rate, together
//! with the reverse-mode adjoints the planner uses for gradients.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{e3, SystemConfig, Vec3};

/// Derivative orders carried by a flat sample (0..=3).
pub const SAMPLE_ORDERS: usize = 4;

const THRUST_EPS: f64 = 1e-6;
const HOPF_EPS: f64 = 1e-6;

/// Channel layout of the flat output: payload xyz, then per robot
/// (pitch, azimuth, tension, yaw).
pub mod layout {
    pub const PAYLOAD: usize = 0;
    pub const PITCH: usize = 0;
    pub const AZIMUTH: usize = 1;
    pub const TENSION: usize = 2;
    pub const YAW: usize = 3;

    pub const fn channels(n_robots: usize) -> usize {
        4 * n_robots + 3
    }

    pub const fn robot_base(n: usize) -> usize {
        3 + 4 * n
    }

    pub const fn pitch(n: usize) -> usize {
        robot_base(n) + PITCH
    }

    pub const fn azimuth(n: usize) -> usize {
        robot_base(n) + AZIMUTH
    }

    pub const fn tension(n: usize) -> usize {
        robot_base(n) + TENSION
    }

    pub const fn yaw(n: usize) -> usize {
        robot_base(n) + YAW
    }
}

/// Flat output and its derivatives at one instant. `derivs[i][j]` is the
/// i-th time derivative of channel j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatSample {
    pub n_robots: usize,
    pub derivs: Vec<Vec<f64>>,
}

impl FlatSample {
    pub fn zeros(n_robots: usize, orders: usize) -> Self {
        Self {
            n_robots,
            derivs: vec![vec![0.0; layout::channels(n_robots)]; orders],
        }
    }

    /// Rest sample: payload at `p`, robot channels at the given values, all
    /// derivatives zero.
    pub fn rest(n_robots: usize, orders: usize, p: Vec3, robot: &[[f64; 4]]) -> Self {
        let mut s = Self::zeros(n_robots, orders);
        s.derivs[0][..3].copy_from_slice(p.as_slice());
        for (n, vals) in robot.iter().enumerate() {
            s.derivs[0][layout::robot_base(n)..layout::robot_base(n) + 4].copy_from_slice(vals);
        }
        s
    }

    pub fn orders(&self) -> usize {
        self.derivs.len()
    }

    pub fn payload(&self, order: usize) -> Vec3 {
        let d = &self.derivs[order];
        Vec3::new(d[0], d[1], d[2])
    }

    pub fn channel(&self, order: usize, idx: usize) -> f64 {
        self.derivs[order][idx]
    }

    /// Derivative chain of channel `idx` over orders 0..=3 (missing orders are zero).
    pub fn jet(&self, idx: usize) -> [f64; 4] {
        let mut j = [0.0; 4];
        for (k, v) in j.iter_mut().enumerate().take(self.orders()) {
            *v = self.derivs[k][idx];
        }
        j
    }

    pub fn validate(&self) -> Result<()> {
        let d = layout::channels(self.n_robots);
        if self.derivs.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidConfig(format!(
                "flat sample rows must have {d} channels"
            )));
        }
        if self.derivs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "flat sample has non-finite entries".into(),
            ));
        }
        Ok(())
    }
}

/// Derivatives of `cos u` and `sin u` along a time jet of `u`.
#[derive(Debug, Clone, Copy)]
pub struct TrigJet {
    pub c: [f64; 4],
    pub s: [f64; 4],
}

pub fn trig_jet(u: &[f64; 4]) -> TrigJet {
    let (s0, c0) = u[0].sin_cos();
    let (u1, u2, u3) = (u[1], u[2], u[3]);
    TrigJet {
        c: [
            c0,
            -s0 * u1,
            -c0 * u1 * u1 - s0 * u2,
            s0 * u1 * u1 * u1 - 3.0 * c0 * u1 * u2 - s0 * u3,
        ],
        s: [
            s0,
            c0 * u1,
            -s0 * u1 * u1 + c0 * u2,
            -c0 * u1 * u1 * u1 - 3.0 * s0 * u1 * u2 + c0 * u3,
        ],
    }
}

/// Pulls adjoints of a [`TrigJet`] back to the angle jet.
pub fn trig_jet_adjoint(u: &[f64; 4], jet: &TrigJet, cb: &[f64; 4], sb: &[f64; 4]) -> [f64; 4] {
    let (s0, c0) = (jet.s[0], jet.c[0]);
    let (u1, u2) = (u[1], u[2]);
    let mut g = [0.0; 4];
    for k in 0..4 {
        g[0] += -cb[k] * jet.s[k] + sb[k] * jet.c[k];
    }
    g[1] = cb[1] * (-s0)
        + cb[2] * (-2.0 * c0 * u1)
        + cb[3] * (3.0 * s0 * u1 * u1 - 3.0 * c0 * u2)
        + sb[1] * c0
        + sb[2] * (-2.0 * s0 * u1)
        + sb[3] * (-3.0 * c0 * u1 * u1 - 3.0 * s0 * u2);
    g[2] = cb[2] * (-s0) + cb[3] * (-3.0 * c0 * u1) + sb[2] * c0 + sb[3] * (-3.0 * s0 * u1);
    g[3] = -cb[3] * s0 + sb[3] * c0;
    g
}

const BINOM: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0],
    [1.0, 3.0, 3.0, 1.0],
];

/// Cable direction and its first three time derivatives from the pitch and
/// azimuth jets.
pub fn rho_derivatives(theta: &[f64; 4], phi: &[f64; 4]) -> [Vec3; 4] {
    let t = trig_jet(theta);
    let p = trig_jet(phi);
    let mut out = [Vec3::zeros(); 4];
    for (k, r) in out.iter_mut().enumerate() {
        let mut x = 0.0;
        let mut y = 0.0;
        for j in 0..=k {
            x += BINOM[k][j] * t.c[j] * p.c[k - j];
            y += BINOM[k][j] * t.c[j] * p.s[k - j];
        }
        *r = Vec3::new(x, y, t.s[k]);
    }
    out
}

/// Adjoint of [`rho_derivatives`]: returns (theta_bar, phi_bar).
pub fn rho_derivatives_adjoint(
    theta: &[f64; 4],
    phi: &[f64; 4],
    rho_bar: &[Vec3; 4],
) -> ([f64; 4], [f64; 4]) {
    let t = trig_jet(theta);
    let p = trig_jet(phi);
    let mut tcb = [0.0; 4];
    let mut tsb = [0.0; 4];
    let mut pcb = [0.0; 4];
    let mut psb = [0.0; 4];
    for k in 0..4 {
        let rb = rho_bar[k];
        for j in 0..=k {
            let b = BINOM[k][j];
            tcb[j] += b * (rb.x * p.c[k - j] + rb.y * p.s[k - j]);
            pcb[k - j] += b * rb.x * t.c[j];
            psb[k - j] += b * rb.y * t.c[j];
        }
        tsb[k] += rb.z;
    }
    (
        trig_jet_adjoint(theta, &t, &tcb, &tsb),
        trig_jet_adjoint(phi, &p, &pcb, &psb),
    )
}

/// Mass-normalized thrust vector of a robot and its time derivative.
pub fn thrust_vector(
    p_dd: &Vec3,
    p_ddd: &Vec3,
    rho: &[Vec3; 4],
    tension: f64,
    tension_dot: f64,
    cfg: &SystemConfig,
) -> Result<(Vec3, Vec3)> {
    let l = cfg.cable_length;
    let m = cfg.robot_mass;
    let f = p_dd + rho[2] * l + e3() * cfg.gravity + rho[0] * (tension / m);
    if f.norm() < THRUST_EPS {
        return Err(Error::DegenerateThrust(f.norm()));
    }
    let f_dot = p_ddd + rho[3] * l + (rho[0] * tension_dot + rho[1] * tension) / m;
    Ok((f, f_dot))
}

/// Unit body z-axis and its derivative from the thrust vector.
pub fn body_z(f: &Vec3, f_dot: &Vec3) -> (Vec3, Vec3) {
    let r = f.norm();
    let z = f / r;
    let z_dot = (f_dot - z * z.dot(f_dot)) / r;
    (z, z_dot)
}

/// Adjoint of [`body_z`]: returns (f_bar, f_dot_bar).
pub fn body_z_adjoint(f: &Vec3, f_dot: &Vec3, z_bar: &Vec3, z_dot_bar: &Vec3) -> (Vec3, Vec3) {
    let r = f.norm();
    let z = f / r;
    let proj = Matrix3::identity() - z * z.transpose();
    let z_dot = proj * f_dot / r;
    let f_dot_bar = proj * z_dot_bar / r;
    let zb = z_bar - (z_dot_bar * z.dot(f_dot) + f_dot * z.dot(z_dot_bar)) / r;
    let r_bar = -z_dot.dot(z_dot_bar) / r;
    let f_bar = proj * zb / r + z * r_bar;
    (f_bar, f_dot_bar)
}

fn yaw_quaternion(psi: f64) -> Quaternion<f64> {
    let (s, c) = (0.5 * psi).sin_cos();
    Quaternion::new(c, 0.0, 0.0, s)
}

fn tilt_quaternion(z: &Vec3) -> Result<Quaternion<f64>> {
    if z.z <= -1.0 + HOPF_EPS {
        return Err(Error::HopfSingularity(z.z));
    }
    let k = 1.0 / (2.0 * (z.z + 1.0)).sqrt();
    Ok(Quaternion::new((z.z + 1.0) * k, -z.y * k, z.x * k, 0.0))
}

/// Attitude whose body z-axis is `N(f)` and whose yaw is `psi`, assembled as
/// the tilt quaternion times the yaw quaternion.
pub fn attitude_from_hopf(f: &Vec3, psi: f64) -> Result<UnitQuaternion<f64>> {
    let r = f.norm();
    if r < THRUST_EPS {
        return Err(Error::DegenerateThrust(r));
    }
    let q = tilt_quaternion(&(f / r))? * yaw_quaternion(psi);
    Ok(UnitQuaternion::new_normalize(q))
}

/// Yaw of a Hopf-factorized attitude (inverse of the yaw factor).
pub fn hopf_yaw(q: &UnitQuaternion<f64>) -> Result<f64> {
    let z = q * e3();
    let qz = tilt_quaternion(&z)?;
    let qpsi = qz.conjugate() * q.quaternion();
    Ok(2.0 * qpsi.k.atan2(qpsi.w))
}

/// Angle between the body z-axis and the world z-axis.
pub fn tilt_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    (1.0 - 2.0 * (q.i * q.i + q.j * q.j))
        .clamp(-1.0, 1.0)
        .acos()
}

/// Body rate from the body z-axis, its derivative, yaw and yaw rate.
pub fn body_rate(z: &Vec3, z_dot: &Vec3, psi: f64, psi_dot: f64) -> Result<Vec3> {
    if z.z <= -1.0 + HOPF_EPS {
        return Err(Error::HopfSingularity(z.z));
    }
    let (s, c) = psi.sin_cos();
    let d = z.z + 1.0;
    let a = z.x * s - z.y * c;
    let b = z.x * c + z.y * s;
    Ok(Vec3::new(
        z_dot.x * s - z_dot.y * c - z_dot.z * a / d,
        z_dot.x * c + z_dot.y * s - z_dot.z * b / d,
        (z.y * z_dot.x - z.x * z_dot.y) / d + psi_dot,
    ))
}

/// Adjoint of [`body_rate`]: returns (z_bar, z_dot_bar, psi_bar, psi_dot_bar).
pub fn body_rate_adjoint(z: &Vec3, z_dot: &Vec3, psi: f64, w_bar: &Vec3) -> (Vec3, Vec3, f64, f64) {
    let (s, c) = psi.sin_cos();
    let d = z.z + 1.0;
    let a = z.x * s - z.y * c;
    let b = z.x * c + z.y * s;
    let (w1, w2, w3) = (w_bar.x, w_bar.y, w_bar.z);
    let zd_bar = Vec3::new(
        w1 * s + w2 * c + w3 * z.y / d,
        -w1 * c + w2 * s - w3 * z.x / d,
        -(w1 * a + w2 * b) / d,
    );
    let cross = z.y * z_dot.x - z.x * z_dot.y;
    let z_bar = Vec3::new(
        -z_dot.z * (w1 * s + w2 * c) / d - w3 * z_dot.y / d,
        -z_dot.z * (-w1 * c + w2 * s) / d + w3 * z_dot.x / d,
        (z_dot.z * (w1 * a + w2 * b) - w3 * cross) / (d * d),
    );
    let dw1 = z_dot.x * c + z_dot.y * s - z_dot.z * b / d;
    let dw2 = -z_dot.x * s + z_dot.y * c + z_dot.z * a / d;
    (z_bar, zd_bar, w1 * dw1 + w2 * dw2, w3)
}

/// Robot quantities implied by one flat sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotFlatState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub thrust: Vec3,
    pub thrust_dot: Vec3,
    pub z_body: Vec3,
    pub z_body_dot: Vec3,
    pub attitude: UnitQuaternion<f64>,
    pub tilt: f64,
    pub body_rate: Vec3,
    /// Filled by [`angular_accel`]; zero otherwise.
    pub body_accel: Vec3,
}

/// Full flatness map for robot `n`. Needs derivative orders 0..=3.
pub fn robot_flat_state(
    sample: &FlatSample,
    n: usize,
    cfg: &SystemConfig,
) -> Result<RobotFlatState> {
    if sample.orders() < SAMPLE_ORDERS {
        return Err(Error::InvalidConfig(
            "flat sample needs derivative orders 0..=3".into(),
        ));
    }
    let rho = rho_derivatives(
        &sample.jet(layout::pitch(n)),
        &sample.jet(layout::azimuth(n)),
    );
    let tj = sample.jet(layout::tension(n));
    let yj = sample.jet(layout::yaw(n));
    let l = cfg.cable_length;
    let (f, f_dot) = thrust_vector(
        &sample.payload(2),
        &sample.payload(3),
        &rho,
        tj[0],
        tj[1],
        cfg,
    )?;
    let (z, z_dot) = body_z(&f, &f_dot);
    let attitude = attitude_from_hopf(&f, yj[0])?;
    Ok(RobotFlatState {
        position: sample.payload(0) + rho[0] * l,
        velocity: sample.payload(1) + rho[1] * l,
        acceleration: sample.payload(2) + rho[2] * l,
        thrust: f,
        thrust_dot: f_dot,
        z_body: z,
        z_body_dot: z_dot,
        attitude,
        tilt: tilt_angle(&attitude),
        body_rate: body_rate(&z, &z_dot, yj[0], yj[1])?,
        body_accel: Vec3::zeros(),
    })
}

/// Angular acceleration of robot `n` by central differences of the body
/// rate with step `h`, falling back to one-sided differences within `h` of
/// the domain boundaries.
pub fn angular_accel<S>(
    sample_at: S,
    domain: (f64, f64),
    t: f64,
    h: f64,
    n: usize,
    cfg: &SystemConfig,
) -> Result<Vec3>
where
    S: Fn(f64) -> Result<FlatSample>,
{
    let rate =
        |time: f64| -> Result<Vec3> { Ok(robot_flat_state(&sample_at(time)?, n, cfg)?.body_rate) };
    let (t0, t1) = domain;
    if t - h >= t0 && t + h <= t1 {
        Ok((rate(t + h)? - rate(t - h)?) / (2.0 * h))
    } else if t + 2.0 * h <= t1 {
        Ok((rate(t + h)? * 4.0 - rate(t)? * 3.0 - rate(t + 2.0 * h)?) / (2.0 * h))
    } else if t - 2.0 * h >= t0 {
        Ok((rate(t)? * 3.0 - rate(t - h)? * 4.0 + rate(t - 2.0 * h)?) / (2.0 * h))
    } else {
        Ok(Vec3::zeros())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rho_from_angles;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    /// Cubic-in-time angle: value and derivatives at t.
    fn poly_jet(a: &[f64; 4], t: f64) -> [f64; 4] {
        [
            a[0] + a[1] * t + a[2] * t * t + a[3] * t * t * t,
            a[1] + 2.0 * a[2] * t + 3.0 * a[3] * t * t,
            2.0 * a[2] + 6.0 * a[3] * t,
            6.0 * a[3],
        ]
    }

    #[test]
    fn stationary_direction_has_zero_rates() {
        let r = rho_derivatives(&[0.4, 0.0, 0.0, 0.0], &[1.3, 0.0, 0.0, 0.0]);
        assert_relative_eq!(r[0], rho_from_angles(0.4, 1.3), epsilon = 1e-15);
        for k in 1..4 {
            assert_eq!(r[k], Vec3::zeros());
        }
    }

    #[test]
    fn linear_pitch_rate() {
        let r = rho_derivatives(&[0.0, 0.1, 0.0, 0.0], &[0.0; 4]);
        assert_relative_eq!(r[1], Vec3::new(0.0, 0.0, 0.1), epsilon = 1e-15);
    }

    #[test]
    fn rho_chain_matches_finite_differences() {
        let ta = [0.3, 0.7, -0.4, 0.2];
        let pa = [-1.0, 0.5, 0.9, -0.3];
        let t = 0.37;
        let h = 1e-4;
        let at = |t: f64| rho_derivatives(&poly_jet(&ta, t), &poly_jet(&pa, t));
        let r = at(t);
        let (rp, rm) = (at(t + h), at(t - h));
        for k in 0..3 {
            let fd = (rp[k] - rm[k]) / (2.0 * h);
            assert!(
                (fd - r[k + 1]).norm() < 1e-6 * (1.0 + r[k + 1].norm()),
                "order {k}"
            );
        }
    }

    #[test]
    fn hover_thrust() {
        let cfg = SystemConfig::default();
        let rho = rho_derivatives(&[FRAC_PI_2, 0.0, 0.0, 0.0], &[0.0; 4]);
        let tension = cfg.hover_tension(FRAC_PI_2);
        let (f, fd) =
            thrust_vector(&Vec3::zeros(), &Vec3::zeros(), &rho, tension, 0.0, &cfg).unwrap();
        assert_relative_eq!(
            f,
            e3() * (cfg.gravity + tension / cfg.robot_mass),
            epsilon = 1e-12
        );
        assert_relative_eq!(f.norm(), 9.81 + 0.2 * 9.81 / 3.0 / 0.32, epsilon = 1e-12);
        assert!((f.norm() - 11.854).abs() < 1e-3);
        assert_eq!(fd, Vec3::zeros());
    }

    #[test]
    fn degenerate_thrust_rejected() {
        let cfg = SystemConfig::default();
        let rho = rho_derivatives(&[FRAC_PI_2, 0.0, 0.0, 0.0], &[0.0; 4]);
        let r = thrust_vector(&(-e3() * cfg.gravity), &Vec3::zeros(), &rho, 0.0, 0.0, &cfg);
        assert!(matches!(r, Err(Error::DegenerateThrust(_))));
    }

    #[test]
    fn hopf_examples() {
        let g = e3() * 9.81;
        let q = attitude_from_hopf(&g, 0.0).unwrap();
        assert_relative_eq!(
            q.quaternion().coords,
            Quaternion::identity().coords,
            epsilon = 1e-15
        );
        let q = attitude_from_hopf(&g, FRAC_PI_2).unwrap();
        let c = FRAC_PI_4.cos();
        assert_relative_eq!(
            q.quaternion().coords,
            Quaternion::new(c, 0.0, 0.0, FRAC_PI_4.sin()).coords,
            epsilon = 1e-15
        );
        assert!(matches!(
            attitude_from_hopf(&(-g), 0.0),
            Err(Error::HopfSingularity(_))
        ));
    }

    #[test]
    fn tilt_examples() {
        assert_eq!(tilt_angle(&UnitQuaternion::identity()), 0.0);
        let roll = UnitQuaternion::new_normalize(Quaternion::new(
            FRAC_PI_4.cos(),
            FRAC_PI_4.sin(),
            0.0,
            0.0,
        ));
        assert_relative_eq!(tilt_angle(&roll), FRAC_PI_2, epsilon = 1e-12);
        let yaw = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 2.2);
        assert!(tilt_angle(&yaw).abs() < 1e-7);
    }

    #[test]
    fn body_rate_examples() {
        let w = body_rate(&e3(), &Vec3::zeros(), 0.3, 0.0).unwrap();
        assert_eq!(w, Vec3::zeros());
        let w = body_rate(&e3(), &Vec3::zeros(), 0.3, 1.0).unwrap();
        assert_relative_eq!(w, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    fn random_sample(seed: &[f64]) -> impl Fn(f64) -> Result<FlatSample> + '_ {
        move |t: f64| {
            let n = 2;
            let mut s = FlatSample::zeros(n, 4);
            for ch in 0..layout::channels(n) {
                let a = [
                    seed[ch % seed.len()],
                    0.3 * seed[(ch + 1) % seed.len()],
                    0.2 * seed[(ch + 2) % seed.len()],
                    0.1 * seed[(ch + 3) % seed.len()],
                ];
                let mut j = poly_jet(&a, t);
                if ch >= 3 && (ch - 3) % 4 == layout::PITCH {
                    j[0] += 0.9;
                }
                if ch >= 3 && (ch - 3) % 4 == layout::TENSION {
                    j[0] += 1.0;
                }
                for (k, v) in j.iter().enumerate() {
                    s.derivs[k][ch] = *v;
                }
            }
            Ok(s)
        }
    }

    const SEED: [f64; 7] = [0.3, -0.5, 0.8, 0.1, -0.9, 0.6, -0.2];

    #[test]
    fn thrust_dot_and_body_rate_match_finite_differences() {
        let cfg = SystemConfig::with_robots(2);
        let at = random_sample(&SEED);
        let t = 0.41;
        let h = 1e-5;
        for n in 0..2 {
            let st = robot_flat_state(&at(t).unwrap(), n, &cfg).unwrap();
            let sp = robot_flat_state(&at(t + h).unwrap(), n, &cfg).unwrap();
            let sm = robot_flat_state(&at(t - h).unwrap(), n, &cfg).unwrap();
            let fd = (sp.thrust - sm.thrust) / (2.0 * h);
            assert!((fd - st.thrust_dot).norm() < 1e-5 * st.thrust_dot.norm().max(1.0));
            let dq = (sp.attitude.into_inner() - sm.attitude.into_inner()) / (2.0 * h);
            let w = st.attitude.into_inner().conjugate() * dq * 2.0;
            assert!((w.imag() - st.body_rate).norm() < 1e-5);
            assert!(w.w.abs() < 1e-6);
            let za = st.attitude * e3();
            assert_relative_eq!(za, st.z_body, epsilon = 1e-9);
            let fd = (sp.velocity - sm.velocity) / (2.0 * h);
            assert!((fd - st.acceleration).norm() < 1e-6 * st.acceleration.norm().max(1.0));
        }
    }

    #[test]
    fn flat_round_trip_reproduces_robot_dynamics() {
        // a = f - g e3 - F rho / m must equal the robot acceleration from the
        // kinematic chain
        let cfg = SystemConfig::with_robots(2);
        let s = random_sample(&SEED)(0.2).unwrap();
        for n in 0..2 {
            let st = robot_flat_state(&s, n, &cfg).unwrap();
            let rho = rho_from_angles(
                s.channel(0, layout::pitch(n)),
                s.channel(0, layout::azimuth(n)),
            );
            let a = st.thrust
                - e3() * cfg.gravity
                - rho * (s.channel(0, layout::tension(n)) / cfg.robot_mass);
            assert_relative_eq!(a, st.acceleration, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn angular_accel_richardson() {
        let cfg = SystemConfig::with_robots(2);
        let at = random_sample(&SEED);
        let exact = |t: f64| {
            // high-accuracy reference from a five-point stencil
            let h = 1e-3;
            let w = |x: f64| {
                robot_flat_state(&at(x).unwrap(), 0, &cfg)
                    .unwrap()
                    .body_rate
            };
            (w(t - 2.0 * h) - w(t - h) * 8.0 + w(t + h) * 8.0 - w(t + 2.0 * h)) / (12.0 * h)
        };
        let t = 0.5;
        let e1 = (angular_accel(&at, (0.0, 1.0), t, 0.02, 0, &cfg).unwrap() - exact(t)).norm();
        let e2 = (angular_accel(&at, (0.0, 1.0), t, 0.01, 0, &cfg).unwrap() - exact(t)).norm();
        let ratio = e1 / e2;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        let one_sided = angular_accel(&at, (0.0, 1.0), 0.0, 1e-3, 0, &cfg).unwrap();
        assert!((one_sided - exact(0.01)).norm() < 0.5);
    }

    #[test]
    fn hover_has_zero_angular_accel() {
        let cfg = SystemConfig::default();
        let hover = |_t: f64| {
            let th = 0.8;
            let f = cfg.hover_tension(th);
            let robots: Vec<[f64; 4]> = (0..3)
                .map(|n| [th, 2.0 * PI * n as f64 / 3.0, f, 0.0])
                .collect();
            Ok(FlatSample::rest(3, 4, Vec3::zeros(), &robots))
        };
        let a = angular_accel(hover, (0.0, 1.0), 0.5, 1e-3, 1, &cfg).unwrap();
        assert_eq!(a, Vec3::zeros());
    }

    fn fd_check<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], grad: &[f64]) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "component {i}: fd {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn rho_adjoint_matches_finite_differences() {
        let w: [Vec3; 4] = [
            Vec3::new(0.3, -0.2, 0.5),
            Vec3::new(-0.7, 0.1, 0.4),
            Vec3::new(0.2, 0.9, -0.3),
            Vec3::new(0.6, -0.5, 0.8),
        ];
        let x = [0.4, 0.3, -0.8, 1.1, 2.0, -0.6, 0.5, 0.9];
        let scalar = |x: &[f64]| {
            let r = rho_derivatives(&[x[0], x[1], x[2], x[3]], &[x[4], x[5], x[6], x[7]]);
            (0..4).map(|k| r[k].dot(&w[k])).sum::<f64>()
        };
        let (gt, gp) =
            rho_derivatives_adjoint(&[x[0], x[1], x[2], x[3]], &[x[4], x[5], x[6], x[7]], &w);
        let grad: Vec<f64> = gt.iter().chain(gp.iter()).copied().collect();
        fd_check(scalar, &x, &grad);
    }

    #[test]
    fn body_z_and_rate_adjoints_match_finite_differences() {
        let wz = Vec3::new(0.3, -0.6, 0.2);
        let wzd = Vec3::new(-0.4, 0.5, 0.9);
        let ww = Vec3::new(0.7, -0.3, 0.45);
        let x = [1.2, -0.8, 9.5, 0.6, 2.1, -1.3, 0.7, -0.25];
        let scalar = |x: &[f64]| {
            let f = Vec3::new(x[0], x[1], x[2]);
            let fd = Vec3::new(x[3], x[4], x[5]);
            let (z, zd) = body_z(&f, &fd);
            let w = body_rate(&z, &zd, x[6], x[7]).unwrap();
            z.dot(&wz) + zd.dot(&wzd) + w.dot(&ww)
        };
        let f = Vec3::new(x[0], x[1], x[2]);
        let fdot = Vec3::new(x[3], x[4], x[5]);
        let (z, zd) = body_z(&f, &fdot);
        let (zb, zdb, psib, psidb) = body_rate_adjoint(&z, &zd, x[6], &ww);
        let (fb, fdb) = body_z_adjoint(&f, &fdot, &(zb + wz), &(zdb + wzd));
        let grad = [fb.x, fb.y, fb.z, fdb.x, fdb.y, fdb.z, psib, psidb];
        fd_check(scalar, &x, &grad);
    }

    proptest! {
        #[test]
        fn hopf_round_trip(fx in -5.0..5.0f64, fy in -5.0..5.0f64, fz in 0.5..15.0f64, psi in -3.0..3.0f64) {
            let f = Vec3::new(fx, fy, fz);
            let q = attitude_from_hopf(&f, psi).unwrap();
            prop_assert!((q * e3() - f.normalize()).norm() < 1e-9);
            prop_assert!((hopf_yaw(&q).unwrap() - psi).abs() < 1e-9);
            let angle = f.normalize().dot(&e3()).clamp(-1.0, 1.0).acos();
            prop_assert!((tilt_angle(&q) - angle).abs() < 1e-9);
        }

        #[test]
        fn z_dot_orthogonal(fx in -5.0..5.0f64, fy in -5.0..5.0f64, fz in 0.5..15.0f64,
                            dx in -9.0..9.0f64, dy in -9.0..9.0f64, dz in -9.0..9.0f64) {
            let (z, zd) = body_z(&Vec3::new(fx, fy, fz), &Vec3::new(dx, dy, dz));
            prop_assert!(z.dot(&zd).abs() < 1e-10);
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }
}
