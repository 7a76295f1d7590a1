use super::penalty::Terms;
use crate::flatness::{layout, FlatSample};
use crate::traj::{basis, Trajectory};

/// Trapezoidal transcription of a time-integrated sample penalty.
///
/// `penalty` sees a sample with derivative orders `0..=4` and accumulates
/// `dJ/dZ` for orders `0..4` into its gradient buffer (`order * D + ch`).
/// Returns the integrated terms; `dJ/dc` and `dJ/dT` are accumulated into
/// `grad_c` and `grad_t`.
pub fn transcribe<F>(
    traj: &Trajectory,
    kappa: usize,
    mut penalty: F,
    grad_c: &mut [f64],
    grad_t: &mut [f64],
) -> Terms
where
    F: FnMut(&FlatSample, &mut [f64]) -> Terms,
{
    assert!(kappa >= 2);
    let s = traj.s;
    let n = 2 * s;
    let d = traj.dims;
    debug_assert_eq!(d, layout::channels(traj.n_robots));
    let orders = 4;
    let mut sample = FlatSample::zeros(traj.n_robots, orders + 1);
    let mut g = vec![0.0; orders * d];
    let mut beta = vec![vec![0.0; n]; orders];
    let mut total = Terms::default();

    for (m, &t_m) in traj.durations.iter().enumerate() {
        let mut piece = Terms::default();
        let mut dilation = 0.0;
        let h = t_m / kappa as f64;
        for k in 0..=kappa {
            let w = if k == 0 || k == kappa { 0.5 } else { 1.0 };
            let tau = h * k as f64;
            for (o, row) in sample.derivs.iter_mut().enumerate() {
                traj.eval_piece(m, tau, o, row);
            }
            g.iter_mut().for_each(|v| *v = 0.0);
            let jk = penalty(&sample, &mut g);
            piece += jk.scaled(w);

            let scale = h * w;
            for (o, b) in beta.iter_mut().enumerate() {
                basis(n, o, tau, b);
            }
            let mut dj_dt = 0.0;
            for o in 0..orders {
                let go = &g[o * d..(o + 1) * d];
                if go.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for (gv, zv) in go.iter().zip(&sample.derivs[o + 1]) {
                    dj_dt += gv * zv;
                }
                for (q, &bq) in beta[o].iter().enumerate() {
                    if bq == 0.0 {
                        continue;
                    }
                    let row = &mut grad_c[(n * m + q) * d..(n * m + q + 1) * d];
                    for (r, gv) in row.iter_mut().zip(go) {
                        *r += scale * bq * gv;
                    }
                }
            }
            dilation += w * k as f64 * dj_dt;
        }
        let integral = piece.scaled(h);
        grad_t[m] += integral.total() / t_m + h / kappa as f64 * dilation;
        total += integral;
    }
    total
}
