/// C²-smooth ramp: 0 below zero, cubic blend on `(0, mu]`, then `x - mu/2`.
/// Returns the value and its derivative.
pub fn smooth_ramp(x: f64, mu: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x <= mu {
        let r = x / mu;
        let r2 = r * r;
        ((mu - 0.5 * x) * r2 * r, r2 * (3.0 - 2.0 * r))
    } else {
        (x - 0.5 * mu, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches() {
        let mu = 0.01;
        assert_eq!(smooth_ramp(-1.0, mu), (0.0, 0.0));
        let (v, d) = smooth_ramp(mu, mu);
        assert!((v - mu / 2.0).abs() < 1e-15);
        assert!((d - 1.0).abs() < 1e-15);
        assert_eq!(smooth_ramp(1.0, mu), (1.0 - mu / 2.0, 1.0));
    }

    #[test]
    fn derivative_and_curvature_continuous() {
        let mu = 0.3;
        let h = 1e-6;
        for &x in &[-0.2, 0.05, 0.1, 0.29, 0.5] {
            let fd = (smooth_ramp(x + h, mu).0 - smooth_ramp(x - h, mu).0) / (2.0 * h);
            assert!((fd - smooth_ramp(x, mu).1).abs() < 1e-8);
        }
        // second derivative matches from both sides at both joints
        let d2 = |x: f64| (smooth_ramp(x + h, mu).1 - smooth_ramp(x - h, mu).1) / (2.0 * h);
        assert!(d2(1e-4).abs() < 1e-2);
        assert!(d2(mu - 1e-4).abs() < 1e-2);
    }
}
