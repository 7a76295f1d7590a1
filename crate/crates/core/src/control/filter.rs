use crate::error::{Error, Result};
use crate::model::Vec3;

/// Second-order Butterworth low-pass, bilinear transform with the cutoff
/// prewarped, run per channel in transposed direct form II.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPassFilter {
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
    b: [f64; 3],
    a: [f64; 2],
    state: Vec<[f64; 2]>,
    primed: bool,
}

impl LowPassFilter {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64, channels: usize) -> Result<Self> {
        if !(cutoff_hz > 0.0) || !(sample_rate_hz > 2.0 * cutoff_hz) {
            return Err(Error::InvalidConfig(format!(
                "filter cutoff {cutoff_hz} Hz must be positive and below Nyquist of {sample_rate_hz} Hz"
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
        let sq2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sq2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Self {
            cutoff_hz,
            sample_rate_hz,
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - sq2 * k + k * k) * norm],
            state: vec![[0.0; 2]; channels],
            primed: false,
        })
    }

    pub fn channels(&self) -> usize {
        self.state.len()
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64) -> f64 {
        let k = (std::f64::consts::PI * self.cutoff_hz / self.sample_rate_hz).tan();
        let w = (std::f64::consts::PI * freq_hz / self.sample_rate_hz).tan() / k;
        1.0 / (1.0 + w.powi(4)).sqrt()
    }

    /// Sets the internal state to the steady state for a constant input `x`.
    pub fn reset(&mut self, x: &[f64]) {
        let [_, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for (s, &v) in self.state.iter_mut().zip(x) {
            s[1] = (b2 - a2) * v;
            s[0] = (b1 - a1) * v + s[1];
        }
        self.primed = true;
    }

    /// Filters one sample per channel. The first call after construction
    /// primes the state so the output starts at the input.
    pub fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        if !self.primed {
            self.reset(x);
        }
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for ((s, &v), o) in self.state.iter_mut().zip(x).zip(out.iter_mut()) {
            let y = b0 * v + s[0];
            s[0] = b1 * v - a1 * y + s[1];
            s[1] = b2 * v - a2 * y;
            *o = y;
        }
    }

    pub fn apply3(&mut self, x: &Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        self.apply(x.as_slice(), &mut out);
        Vec3::from(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Steady-state amplitude of the filtered sinusoid, measured over the
    /// last whole periods after a long settle.
    fn measured_gain(f: &mut LowPassFilter, freq: f64) -> f64 {
        f.reset(&[0.0]);
        let fs = f.sample_rate_hz;
        let n = (fs * 4.0) as usize;
        let mut peak: f64 = 0.0;
        let mut y = [0.0];
        for i in 0..n {
            let t = i as f64 / fs;
            f.apply(&[(2.0 * std::f64::consts::PI * freq * t).sin()], &mut y);
            if t > 2.0 {
                peak = peak.max(y[0].abs());
            }
        }
        peak
    }

    #[test]
    fn step_settles_to_input() {
        let mut f = LowPassFilter::new(20.0, 333.0, 1).unwrap();
        f.reset(&[0.0]);
        let mut y = [0.0];
        for _ in 0..(0.5 * 333.0) as usize {
            f.apply(&[2.5], &mut y);
        }
        assert!((y[0] - 2.5).abs() / 2.5 < 1e-3);
        for _ in 0..2000 {
            f.apply(&[2.5], &mut y);
        }
        assert!((y[0] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn first_sample_primes_state() {
        let mut f = LowPassFilter::new(20.0, 333.0, 3).unwrap();
        let x = Vec3::new(0.3, -9.81, 4.0);
        for _ in 0..5 {
            assert!((f.apply3(&x) - x).norm() < 1e-12);
        }
    }

    #[test]
    fn half_power_at_cutoff() {
        for fs in [333.0, 2000.0] {
            let mut f = LowPassFilter::new(20.0, fs, 1).unwrap();
            let g = measured_gain(&mut f, 20.0);
            assert!(
                (g * std::f64::consts::SQRT_2 - 1.0).abs() < 0.05,
                "fs {fs}: gain {g}"
            );
        }
    }

    #[test]
    fn roll_off_one_decade_up() {
        let mut f = LowPassFilter::new(20.0, 2000.0, 1).unwrap();
        let g20 = measured_gain(&mut f, 20.0);
        let g200 = measured_gain(&mut f, 200.0);
        assert!(g20 / g200 >= 20.0, "ratio {}", g20 / g200);
    }

    #[test]
    fn measured_response_matches_closed_form() {
        let mut f = LowPassFilter::new(20.0, 1000.0, 1).unwrap();
        for freq in [2.0, 10.0, 35.0, 80.0] {
            let g = measured_gain(&mut f, freq);
            assert!(
                (g - f.gain(freq)).abs() < 5e-3,
                "{freq} Hz: {g} vs {}",
                f.gain(freq)
            );
        }
    }

    #[test]
    fn rejects_cutoff_above_nyquist() {
        assert!(LowPassFilter::new(200.0, 333.0, 1).is_err());
        assert!(LowPassFilter::new(0.0, 333.0, 1).is_err());
    }
}
