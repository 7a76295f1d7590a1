use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{e3, CableState, ControlInput, PayloadState, RobotState, SystemConfig, Vec3};

const PAYLOAD_DIM: usize = 6;
const ROBOT_DIM: usize = 13;

/// Full simulated state: payload, robots and the cable tensions from the
/// most recent closure solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub payload: PayloadState,
    pub robots: Vec<RobotState>,
    pub cables: Vec<CableState>,
    /// Raised when the closure tension of a cable hit zero during the last step.
    pub slack: Vec<bool>,
    pub payload_accel: Vec3,
    pub robot_accel: Vec<Vec3>,
}

/// Plant parameters beyond the nominal model.
#[derive(Debug, Clone)]
pub struct Plant {
    pub cfg: SystemConfig,
    /// Cable attachment point in the robot body frame [m].
    pub attach_offset: Vec3,
    /// Constraint stabilization rate [1/s]; gains are (2a, a^2).
    pub baumgarte: f64,
    /// External world-frame forces acting on each robot [N].
    pub robot_force: Vec<Vec3>,
    /// Linear drag on each robot's world velocity [N s/m].
    pub robot_drag: f64,
}

impl Plant {
    pub fn new(cfg: SystemConfig) -> Self {
        let n = cfg.n_robots;
        Self {
            cfg,
            attach_offset: Vec3::zeros(),
            baumgarte: 10.0,
            robot_force: vec![Vec3::zeros(); n],
            robot_drag: 0.0,
        }
    }

    pub fn with_attach_offset(mut self, offset: Vec3) -> Self {
        self.attach_offset = offset;
        self
    }

    /// Cable attachment point of robot `n` in the world frame.
    pub fn attachment(&self, robot: &RobotState) -> Vec3 {
        robot.position + robot.attitude * self.attach_offset
    }

    /// Advances the world by one classical RK4 step of length `dt`.
    pub fn step(&self, world: &WorldState, inputs: &[ControlInput], dt: f64) -> WorldState {
        assert_eq!(inputs.len(), self.cfg.n_robots, "one input per robot");
        assert!(dt > 0.0, "dt must be positive");
        let y0 = pack(world);
        let mut slack = vec![false; self.cfg.n_robots];
        let mut eval = |y: &[f64]| {
            let d = self.derivative(y, inputs);
            for (s, &flag) in slack.iter_mut().zip(&d.slack) {
                *s |= flag;
            }
            d.dy
        };
        let k1 = eval(&y0);
        let k2 = eval(&axpy(&y0, 0.5 * dt, &k1));
        let k3 = eval(&axpy(&y0, 0.5 * dt, &k2));
        let k4 = eval(&axpy(&y0, dt, &k3));
        let mut y = y0.clone();
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for n in 0..self.cfg.n_robots {
            let b = PAYLOAD_DIM + ROBOT_DIM * n + 6;
            let norm =
                (y[b] * y[b] + y[b + 1] * y[b + 1] + y[b + 2] * y[b + 2] + y[b + 3] * y[b + 3])
                    .sqrt();
            for v in &mut y[b..b + 4] {
                *v /= norm;
            }
        }
        let end = self.derivative(&y, inputs);
        for (s, &flag) in slack.iter_mut().zip(&end.slack) {
            *s |= flag;
        }
        let mut next = unpack(&y, world.time + dt, self.cfg.n_robots);
        next.cables = end.cables;
        next.slack = slack;
        next.payload_accel = end.payload_accel;
        next.robot_accel = end.robot_accel;
        next
    }

    /// Re-evaluates tensions and accelerations of `world` under `inputs`
    /// without advancing time.
    pub fn refresh(&self, world: &WorldState, inputs: &[ControlInput]) -> WorldState {
        let d = self.derivative(&pack(world), inputs);
        let mut w = world.clone();
        w.cables = d.cables;
        w.slack = d.slack;
        w.payload_accel = d.payload_accel;
        w.robot_accel = d.robot_accel;
        w
    }

    fn derivative(&self, y: &[f64], inputs: &[ControlInput]) -> Derivative {
        let cfg = &self.cfg;
        let n = cfg.n_robots;
        let g = cfg.gravity;
        let alpha = self.baumgarte;
        let j = cfg.inertia_matrix();
        let j_inv = j.try_inverse().expect("inertia is positive definite");
        let p = v3(y, 0);
        let v = v3(y, 3);
        let r_off = self.attach_offset;

        struct Robot {
            rot: UnitQuaternion<f64>,
            omega: Vec3,
            d: Vec3,
            d_dot: Vec3,
            u: Vec3,
            // acceleration of the attachment point without the cable force, plus g
            a_free: Vec3,
            // attachment acceleration per unit of own tension (negated)
            k: Vec3,
            omega_dot_free: Vec3,
            external: Vec3,
        }

        let robots: Vec<Robot> = (0..n)
            .map(|i| {
                let b = PAYLOAD_DIM + ROBOT_DIM * i;
                let pn = v3(y, b);
                let vn = v3(y, b + 3);
                let rot = UnitQuaternion::new_normalize(Quaternion::new(
                    y[b + 6],
                    y[b + 7],
                    y[b + 8],
                    y[b + 9],
                ));
                let omega = v3(y, b + 10);
                let lever = rot * r_off;
                let d = pn + lever - p;
                let d_dot = vn + rot * omega.cross(&r_off) - v;
                let u = d.normalize();
                let external = self.robot_force[i] - vn * self.robot_drag;
                let omega_dot_free = j_inv * (inputs[i].torque - omega.cross(&(j * omega)));
                let a_free = rot * e3() * inputs[i].thrust
                    + external / cfg.robot_mass
                    + rot * (omega_dot_free.cross(&r_off) + omega.cross(&omega.cross(&r_off)));
                let body_u = rot.inverse() * u;
                let k = u / cfg.robot_mass + rot * ((j_inv * r_off.cross(&body_u)).cross(&r_off));
                Robot {
                    rot,
                    omega,
                    d,
                    d_dot,
                    u,
                    a_free,
                    k,
                    omega_dot_free,
                    external,
                }
            })
            .collect();

        // Index-reduced length constraint with Baumgarte stabilization:
        // d.d_dd = -|d_dot|^2 - 2a d.d_dot - a^2 (|d|^2 - l^2) / 2
        let l2 = cfg.cable_length * cfg.cable_length;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (i, r) in robots.iter().enumerate() {
            for (k, rk) in robots.iter().enumerate() {
                a[(i, k)] = r.d.dot(&rk.u) / cfg.payload_mass;
            }
            a[(i, i)] += r.d.dot(&r.k);
            let c = r.d.norm_squared() - l2;
            rhs[i] = r.d.dot(&r.a_free)
                + r.d_dot.norm_squared()
                + 2.0 * alpha * r.d.dot(&r.d_dot)
                + 0.5 * alpha * alpha * c;
        }
        let (tension, slack) = solve_nonnegative(&a, &rhs);

        let mut dy = vec![0.0; y.len()];
        let pull = robots
            .iter()
            .zip(&tension)
            .fold(Vec3::zeros(), |acc, (r, &f)| acc + r.u * f);
        let payload_accel = pull / cfg.payload_mass - e3() * g;
        dy[0..3].copy_from_slice(v.as_slice());
        dy[3..6].copy_from_slice(payload_accel.as_slice());
        let mut robot_accel = Vec::with_capacity(n);
        let mut cables = Vec::with_capacity(n);
        for (i, r) in robots.iter().enumerate() {
            let b = PAYLOAD_DIM + ROBOT_DIM * i;
            let f = tension[i];
            let body_force = r.rot.inverse() * (-r.u * f);
            let omega_dot = r.omega_dot_free + j_inv * r_off.cross(&body_force);
            let acc = r.rot * e3() * inputs[i].thrust - e3() * g
                + (r.external - r.u * f) / cfg.robot_mass;
            let q = r.rot.into_inner();
            let q_dot = q * Quaternion::from_imag(r.omega) * 0.5;
            dy[b..b + 3].copy_from_slice(&y[b + 3..b + 6]);
            dy[b + 3..b + 6].copy_from_slice(acc.as_slice());
            dy[b + 6] = q_dot.w;
            dy[b + 7] = q_dot.i;
            dy[b + 8] = q_dot.j;
            dy[b + 9] = q_dot.k;
            dy[b + 10..b + 13].copy_from_slice(omega_dot.as_slice());
            robot_accel.push(acc);
            cables.push(CableState::from_direction(&r.d, f));
        }
        Derivative {
            dy,
            slack,
            cables,
            payload_accel,
            robot_accel,
        }
    }
}

struct Derivative {
    dy: Vec<f64>,
    slack: Vec<bool>,
    cables: Vec<CableState>,
    payload_accel: Vec3,
    robot_accel: Vec<Vec3>,
}

/// Solves `a f = b` subject to `f >= 0` by dropping cables whose tension
/// would be negative (active-set iteration).
fn solve_nonnegative(a: &DMatrix<f64>, b: &DVector<f64>) -> (Vec<f64>, Vec<bool>) {
    let n = b.len();
    let mut active: Vec<bool> = vec![true; n];
    let mut f = vec![0.0; n];
    for _ in 0..=n {
        let idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        f.iter_mut().for_each(|x| *x = 0.0);
        if idx.is_empty() {
            break;
        }
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
        let rhs = DVector::from_fn(idx.len(), |r, _| b[idx[r]]);
        let sol = sub
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(idx.len()));
        for (k, &i) in idx.iter().enumerate() {
            f[i] = sol[k];
        }
        let mut changed = false;
        for &i in &idx {
            if f[i] < 0.0 {
                active[i] = false;
                f[i] = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let slack = active.iter().map(|a| !a).collect();
    (f, slack)
}

fn v3(y: &[f64], i: usize) -> Vec3 {
    Vec3::new(y[i], y[i + 1], y[i + 2])
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn pack(w: &WorldState) -> Vec<f64> {
    let mut y = Vec::with_capacity(PAYLOAD_DIM + ROBOT_DIM * w.robots.len());
    y.extend_from_slice(w.payload.position.as_slice());
    y.extend_from_slice(w.payload.velocity.as_slice());
    for r in &w.robots {
        y.extend_from_slice(r.position.as_slice());
        y.extend_from_slice(r.velocity.as_slice());
        let q = r.attitude.quaternion();
        y.extend_from_slice(&[q.w, q.i, q.j, q.k]);
        y.extend_from_slice(r.body_rate.as_slice());
    }
    y
}

fn unpack(y: &[f64], time: f64, n: usize) -> WorldState {
    let robots = (0..n)
        .map(|i| {
            let b = PAYLOAD_DIM + ROBOT_DIM * i;
            RobotState {
                position: v3(y, b),
                velocity: v3(y, b + 3),
                attitude: UnitQuaternion::new_normalize(Quaternion::new(
                    y[b + 6],
                    y[b + 7],
                    y[b + 8],
                    y[b + 9],
                )),
                body_rate: v3(y, b + 10),
            }
        })
        .collect();
    WorldState {
        time,
        payload: PayloadState {
            position: v3(y, 0),
            velocity: v3(y, 3),
        },
        robots,
        cables: vec![CableState::new(0.0, 0.0, 0.0); n],
        slack: vec![false; n],
        payload_accel: Vec3::zeros(),
        robot_accel: vec![Vec3::zeros(); n],
    }
}

/// One RK4 step of the nominal plant (cables attached at the robots' centers
/// of mass, no external forces).
pub fn step_world(
    world: &WorldState,
    inputs: &[ControlInput],
    cfg: &SystemConfig,
    dt: f64,
) -> WorldState {
    Plant::new(cfg.clone()).step(world, inputs, dt)
}

/// Static hover equilibrium with every cable at pitch `theta` and azimuths
/// spread as `2 pi n / N`, together with the inputs that hold it.
pub fn hover_world(
    cfg: &SystemConfig,
    payload: Vec3,
    theta: f64,
) -> (WorldState, Vec<ControlInput>) {
    let n = cfg.n_robots;
    let tension = cfg.hover_tension(theta);
    let mut robots = Vec::with_capacity(n);
    let mut inputs = Vec::with_capacity(n);
    let mut cables = Vec::with_capacity(n);
    for i in 0..n {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let cable = CableState::new(theta, phi, tension);
        let rho = cable.direction();
        let thrust = e3() * cfg.gravity + rho * (tension / cfg.robot_mass);
        let attitude = UnitQuaternion::rotation_between(&e3(), &thrust)
            .unwrap_or_else(UnitQuaternion::identity);
        robots.push(RobotState {
            position: payload + rho * cfg.cable_length,
            velocity: Vec3::zeros(),
            attitude,
            body_rate: Vec3::zeros(),
        });
        inputs.push(ControlInput::new(thrust.norm(), Vec3::zeros()));
        cables.push(cable);
    }
    let world = WorldState {
        time: 0.0,
        payload: PayloadState {
            position: payload,
            velocity: Vec3::zeros(),
        },
        robots,
        cables,
        slack: vec![false; n],
        payload_accel: Vec3::zeros(),
        robot_accel: vec![Vec3::zeros(); n],
    };
    (world, inputs)
}

impl WorldState {
    /// Mechanical energy: translational and rotational kinetic plus
    /// gravitational potential.
    pub fn energy(&self, cfg: &SystemConfig) -> f64 {
        let j = cfg.inertia_matrix();
        let mut e = 0.5 * cfg.payload_mass * self.payload.velocity.norm_squared()
            + cfg.payload_mass * cfg.gravity * self.payload.position.z;
        for r in &self.robots {
            e += 0.5 * cfg.robot_mass * r.velocity.norm_squared()
                + cfg.robot_mass * cfg.gravity * r.position.z
                + 0.5 * r.body_rate.dot(&(j * r.body_rate));
        }
        e
    }

    /// Largest deviation of a cable's end-to-end distance from its length.
    pub fn cable_residual(&self, plant: &Plant) -> f64 {
        self.robots
            .iter()
            .map(|r| {
                ((plant.attachment(r) - self.payload.position).norm() - plant.cfg.cable_length)
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn csv_header(n_robots: usize) -> Vec<String> {
        let mut h: Vec<String> = ["time", "px", "py", "pz", "vx", "vy", "vz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..n_robots {
            for f in [
                "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz",
            ] {
                h.push(format!("r{i}_{f}"));
            }
        }
        for i in 0..n_robots {
            for f in ["theta", "phi", "tension"] {
                h.push(format!("c{i}_{f}"));
            }
        }
        h
    }

    pub fn csv_record(&self) -> Vec<f64> {
        let mut row = vec![self.time];
        row.extend_from_slice(self.payload.position.as_slice());
        row.extend_from_slice(self.payload.velocity.as_slice());
        for r in &self.robots {
            row.extend_from_slice(r.position.as_slice());
            row.extend_from_slice(r.velocity.as_slice());
            let q = r.attitude.quaternion();
            row.extend_from_slice(&[q.w, q.i, q.j, q.k]);
            row.extend_from_slice(r.body_rate.as_slice());
        }
        for c in &self.cables {
            row.extend_from_slice(&[c.pitch, c.azimuth, c.tension]);
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_is_a_fixed_point() {
        let cfg = SystemConfig::default();
        let (w0, inputs) = hover_world(&cfg, Vec3::new(0.0, 0.0, 1.0), 0.84);
        let mut w = w0.clone();
        for _ in 0..1000 {
            w = step_world(&w, &inputs, &cfg, 1e-3);
        }
        assert!((w.payload.position - w0.payload.position).norm() < 1e-9);
        for (a, b) in w.robots.iter().zip(&w0.robots) {
            assert!((a.position - b.position).norm() < 1e-9);
            assert!(a.velocity.norm() < 1e-9);
            assert!(a.attitude.angle_to(&b.attitude) < 1e-9);
        }
        for (c, c0) in w.cables.iter().zip(&w0.cables) {
            assert!((c.tension - c0.tension).abs() < 1e-9);
        }
        assert!(w.slack.iter().all(|s| !s));
    }

    #[test]
    fn spinning_free_fall_conserves_energy_and_length() {
        // Robots orbit the payload horizontally; relative motion keeps the
        // cables taut while everything falls.
        let cfg = SystemConfig::default();
        let plant = Plant::new(cfg.clone());
        let (mut w, _) = hover_world(&cfg, Vec3::zeros(), 0.5);
        let spin = 2.0;
        for (i, r) in w.robots.iter_mut().enumerate() {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
            let radial = Vec3::new(phi.cos(), phi.sin(), 0.0) * cfg.cable_length;
            r.position = radial;
            r.velocity = Vec3::z().cross(&radial) * spin;
            r.attitude = UnitQuaternion::identity();
        }
        let inputs = vec![ControlInput::new(0.0, Vec3::zeros()); cfg.n_robots];
        let e0 = w.energy(&cfg);
        for _ in 0..1000 {
            w = plant.step(&w, &inputs, 1e-3);
            assert!(w.cables.iter().all(|c| c.tension > 0.0));
        }
        let e1 = w.energy(&cfg);
        assert!(
            ((e1 - e0) / e0).abs() < 1e-5,
            "energy drift {}",
            (e1 - e0) / e0
        );
        assert!(w.cable_residual(&plant) < 1e-6);
    }

    #[test]
    fn slack_flag_when_cable_pushes() {
        // thrust far above hover while payload is held by nothing else: the
        // robot flies away, cable stays taut; reverse: robot dives, cable slack
        let cfg = SystemConfig::default();
        let (w0, mut inputs) = hover_world(&cfg, Vec3::zeros(), 1.0);
        inputs[0].thrust = 0.0;
        inputs[0].torque = Vec3::zeros();
        let w1 = step_world(&w0, &inputs, &cfg, 1e-3);
        // a robot with no thrust falls faster than the payload: slack
        assert!(w1.slack[0]);
        assert_eq!(w1.cables[0].tension, 0.0);
        assert!(!w1.slack[1]);
    }

    #[test]
    fn quaternion_norm_preserved() {
        let cfg = SystemConfig::default();
        let (mut w, mut inputs) = hover_world(&cfg, Vec3::zeros(), 0.9);
        inputs[1].torque = Vec3::new(1e-3, -2e-3, 5e-4);
        for _ in 0..200 {
            w = step_world(&w, &inputs, &cfg, 1e-3);
            for r in &w.robots {
                assert!((r.attitude.quaternion().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_row_matches_header() {
        let cfg = SystemConfig::default();
        let (w, _) = hover_world(&cfg, Vec3::zeros(), 0.9);
        assert_eq!(WorldState::csv_header(3).len(), w.csv_record().len());
    }
}
