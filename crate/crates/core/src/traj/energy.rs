use super::{basis, Trajectory};

/// Energy weights per channel: 1 for the payload, `lambda_z` for every robot
/// channel (pitch, azimuth, tension and yaw).
pub fn channel_weights(n_robots: usize, lambda_z: f64) -> Vec<f64> {
    let mut w = vec![1.0; 3];
    w.extend(std::iter::repeat_n(lambda_z, 4 * n_robots));
    w
}

/// Weighted integral of the squared s-th derivative plus `lambda_t` times
/// the total duration. Gradients are accumulated into `grad_c` (shaped like
/// the coefficients) and `grad_t`.
pub fn energy_cost(
    traj: &Trajectory,
    weights: &[f64],
    lambda_t: f64,
    grad_c: &mut [f64],
    grad_t: &mut [f64],
) -> f64 {
    let s = traj.s;
    let n = 2 * s;
    let d = traj.dims;
    assert_eq!(weights.len(), d);
    let falling = |i: usize| ((i - s + 1)..=i).product::<usize>() as f64;
    let mut beta = vec![0.0; n];
    let mut cost = lambda_t * traj.total_duration();
    for (m, &t) in traj.durations.iter().enumerate() {
        let c = traj.piece_coeffs(m);
        let mut q = vec![0.0; n * n];
        for i in s..n {
            for j in s..n {
                let p = (i + j + 1 - 2 * s) as i32;
                q[i * n + j] = falling(i) * falling(j) * t.powi(p) / p as f64;
            }
        }
        for ch in 0..d {
            let w = weights[ch];
            if w == 0.0 {
                continue;
            }
            for i in s..n {
                let mut qc = 0.0;
                for j in s..n {
                    qc += q[i * n + j] * c[j * d + ch];
                }
                cost += w * c[i * d + ch] * qc;
                grad_c[(n * m + i) * d + ch] += 2.0 * w * qc;
            }
        }
        basis(n, s, t, &mut beta);
        let mut dt = lambda_t;
        for ch in 0..d {
            let v: f64 = (s..n).map(|k| beta[k] * c[k * d + ch]).sum();
            dt += weights[ch] * v * v;
        }
        grad_t[m] += dt;
    }
    cost
}
