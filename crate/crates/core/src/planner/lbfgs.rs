//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub memory: usize,
    /// Stop when the gradient infinity norm falls below this.
    pub g_tol: f64,
    /// Stop when the relative decrease over `past` iterations falls below this.
    pub delta: f64,
    pub past: usize,
    pub max_iterations: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            memory: 8,
            g_tol: 1e-5,
            delta: 1e-8,
            past: 5,
            max_iterations: 3000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    RelativeDecrease,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, kept
/// away from the ends of the bracket; bisection when the cubic is unusable.
fn cubic_step(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if !(fa.is_finite() && fb.is_finite() && ga.is_finite() && gb.is_finite()) {
        return mid;
    }
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    let pad = 0.1 * (hi - lo);
    if !x.is_finite() || x < lo + pad || x > hi - pad {
        mid
    } else {
        x
    }
}

struct Eval {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Minimizes `f` from `x0`. `f(x, grad)` returns the cost and writes the
/// gradient; a non-finite cost marks an infeasible point.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &SolverConfig) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let done = |x: Vec<f64>, fx, g: &[f64], it, ev, reason| LbfgsResult {
        x,
        f: fx,
        grad_inf: inf_norm(g),
        iterations: it,
        evaluations: ev,
        reason,
    };
    if n == 0 || !fx.is_finite() {
        return done(x, fx, &g, 0, evaluations, StopReason::LineSearchFailure);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut past_f: VecDeque<f64> = VecDeque::new();
    past_f.push_back(fx);
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];

    for it in 1..=cfg.max_iterations {
        if inf_norm(&g) < cfg.g_tol {
            return done(
                x,
                fx,
                &g,
                it - 1,
                evaluations,
                StopReason::GradientTolerance,
            );
        }
        // two-loop recursion
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= a * yv);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (a - b) * sv);
        }
        let mut slope0 = dot(&g, &dir);
        if !(slope0 < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope0 = dot(&g, &dir);
        }
        let alpha0 = if history.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let mut probe = |alpha: f64, evaluations: &mut usize| -> Eval {
            for i in 0..n {
                xt[i] = x[i] + alpha * dir[i];
            }
            let fv = f(&xt, &mut gt);
            *evaluations += 1;
            Eval {
                alpha,
                f: fv,
                slope: dot(&gt, &dir),
                g: gt.clone(),
            }
        };

        let accepted = strong_wolfe(&mut probe, fx, slope0, alpha0, cfg, &mut evaluations);
        let Some(step) = accepted else {
            if !history.is_empty() {
                history.clear();
                continue;
            }
            return done(x, fx, &g, it, evaluations, StopReason::LineSearchFailure);
        };

        let s: Vec<f64> = dir.iter().map(|d| d * step.alpha).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        for i in 0..n {
            x[i] += s[i];
        }
        fx = step.f;
        g = step.g;
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        past_f.push_back(fx);
        if past_f.len() > cfg.past {
            let old = past_f.pop_front().unwrap();
            if (old - fx) / fx.abs().max(1e-300) < cfg.delta {
                return done(x, fx, &g, it, evaluations, StopReason::RelativeDecrease);
            }
        }
    }
    let it = cfg.max_iterations;
    if inf_norm(&g) < cfg.g_tol {
        return done(x, fx, &g, it, evaluations, StopReason::GradientTolerance);
    }
    done(x, fx, &g, it, evaluations, StopReason::MaxIterations)
}

fn strong_wolfe<P>(
    probe: &mut P,
    f0: f64,
    slope0: f64,
    alpha0: f64,
    cfg: &SolverConfig,
    evals: &mut usize,
) -> Option<Eval>
where
    P: FnMut(f64, &mut usize) -> Eval,
{
    let armijo = |e: &Eval| e.f.is_finite() && e.f <= f0 + cfg.c1 * e.alpha * slope0;
    let curvature = |e: &Eval| e.slope.abs() <= -cfg.c2 * slope0;
    let mut prev = Eval {
        alpha: 0.0,
        f: f0,
        g: Vec::new(),
        slope: slope0,
    };
    let mut alpha = alpha0;
    let mut best: Option<Eval> = None;
    let mut budget = cfg.max_line_search;
    while budget > 0 {
        budget -= 1;
        let cur = probe(alpha, evals);
        if !cur.f.is_finite() {
            // infeasible: shrink toward the last good step
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if !armijo(&cur) || (prev.alpha > 0.0 && cur.f >= prev.f) {
            return zoom(probe, prev, cur, f0, slope0, cfg, &mut budget, evals).or(best);
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            return zoom(probe, cur, prev, f0, slope0, cfg, &mut budget, evals);
        }
        alpha = (2.0 * cur.alpha).min(cur.alpha + 1e6);
        best = Some(Eval {
            alpha: cur.alpha,
            f: cur.f,
            g: cur.g.clone(),
            slope: cur.slope,
        });
        prev = cur;
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn zoom<P>(
    probe: &mut P,
    mut lo: Eval,
    mut hi: Eval,
    f0: f64,
    slope0: f64,
    cfg: &SolverConfig,
    budget: &mut usize,
    evals: &mut usize,
) -> Option<Eval>
where
    P: FnMut(f64, &mut usize) -> Eval,
{
    while *budget > 0 {
        *budget -= 1;
        let alpha = cubic_step(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope);
        if (hi.alpha - lo.alpha).abs() < 1e-14 * lo.alpha.abs().max(1e-10) {
            break;
        }
        let cur = probe(alpha, evals);
        if !cur.f.is_finite() || cur.f > f0 + cfg.c1 * alpha * slope0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.slope.abs() <= -cfg.c2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // accept a sufficient decrease even without the curvature condition
    (lo.alpha > 0.0 && lo.f < f0).then_some(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let mut f = 0.0;
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * a * x[i] - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        f
    }

    #[test]
    fn solves_rosenbrock() {
        let x0 = vec![-1.2, 1.0, -1.2, 1.0, 0.5];
        let cfg = SolverConfig {
            delta: 0.0,
            ..SolverConfig::default()
        };
        let r = minimize(rosenbrock, &x0, &cfg);
        assert_eq!(r.reason, StopReason::GradientTolerance);
        for v in &r.x {
            assert!((v - 1.0).abs() < 1e-5, "{:?}", r.x);
        }
    }

    #[test]
    fn quadratic_converges_in_few_iterations() {
        let diag = [1.0, 10.0, 100.0, 3.0];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..4 {
                g[i] = diag[i] * (x[i] - 1.0);
                v += 0.5 * diag[i] * (x[i] - 1.0).powi(2);
            }
            v
        };
        let r = minimize(f, &[0.0; 4], &SolverConfig::default());
        assert!(r.iterations < 30, "{}", r.iterations);
        assert!(r.grad_inf < 1e-5 || r.reason == StopReason::RelativeDecrease);
    }

    #[test]
    fn respects_infeasible_region() {
        // cost is infinite for x < 0.5; the minimizer of (x-1)^2 is reachable
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] < 0.5 {
                return f64::INFINITY;
            }
            g[0] = 2.0 * (x[0] - 1.0);
            (x[0] - 1.0).powi(2)
        };
        let r = minimize(f, &[3.0], &SolverConfig::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }
}
