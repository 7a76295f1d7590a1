use super::banded::{BandMatrix, BandedLu};
use super::{basis, SparseParams, Trajectory};
use crate::error::{Error, Result};

/// Minimum-control-effort trajectory generator. Keeps the factorization of
/// the last `generate` call so gradients can be pulled back to junction
/// values and durations.
#[derive(Debug, Clone)]
pub struct Minco {
    s: usize,
    dims: usize,
    head: Vec<Vec<f64>>,
    tail: Vec<Vec<f64>>,
    durations: Vec<f64>,
    lu: Option<BandedLu>,
    coeffs: Vec<f64>,
}

impl Minco {
    pub fn new(s: usize, dims: usize) -> Self {
        assert!(s >= 1 && dims >= 1);
        Self {
            s,
            dims,
            head: vec![vec![0.0; dims]; s],
            tail: vec![vec![0.0; dims]; s],
            durations: Vec::new(),
            lu: None,
            coeffs: Vec::new(),
        }
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Boundary conditions: derivative orders `0..s` at start and end.
    pub fn set_boundary(&mut self, head: &[Vec<f64>], tail: &[Vec<f64>]) -> Result<()> {
        let ok = |b: &[Vec<f64>]| {
            b.len() >= self.s && b.iter().take(self.s).all(|r| r.len() == self.dims)
        };
        if !ok(head) || !ok(tail) {
            return Err(Error::InvalidConfig(format!(
                "boundary needs {} derivative rows of {} channels",
                self.s, self.dims
            )));
        }
        self.head = head[..self.s].to_vec();
        self.tail = tail[..self.s].to_vec();
        Ok(())
    }

    pub fn head(&self) -> &[Vec<f64>] {
        &self.head
    }

    pub fn tail(&self) -> &[Vec<f64>] {
        &self.tail
    }

    fn junction_row(&self, i: usize) -> usize {
        self.s + 2 * self.s * i + self.s - 1
    }

    /// Solves for the coefficients interpolating `junctions` with piece
    /// durations `durations`.
    pub fn generate(&mut self, junctions: &[Vec<f64>], durations: &[f64]) -> Result<()> {
        let s = self.s;
        let m = durations.len();
        if m == 0 {
            return Err(Error::SingularSystem("no pieces".into()));
        }
        if let Some(&bad) = durations.iter().find(|&&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::SingularSystem(format!(
                "non-positive duration {bad}"
            )));
        }
        if junctions.len() != m - 1 || junctions.iter().any(|w| w.len() != self.dims) {
            return Err(Error::InvalidConfig(format!(
                "expected {} junctions of {} channels",
                m - 1,
                self.dims
            )));
        }
        let n = 2 * s * m;
        let mut a = BandMatrix::zeros(n, 2 * s, 2 * s);
        let mut b = vec![0.0; n * self.dims];
        let mut beta = vec![0.0; 2 * s];
        let fact = |k: usize| (1..=k).product::<usize>() as f64;

        for k in 0..s {
            a.set(k, k, fact(k));
            b[k * self.dims..(k + 1) * self.dims].copy_from_slice(&self.head[k]);
        }
        for i in 0..m - 1 {
            let base = s + 2 * s * i;
            let ci = 2 * s * i;
            let cn = ci + 2 * s;
            for j in 0..2 * s {
                let (k, next) = if j + 1 < s {
                    (s + j, true)
                } else if j + 1 == s {
                    (0, false)
                } else {
                    (j - s, true)
                };
                basis(2 * s, k, durations[i], &mut beta);
                for q in k..2 * s {
                    a.set(base + j, ci + q, beta[q]);
                }
                if next {
                    a.set(base + j, cn + k, -fact(k));
                }
            }
            let r = self.junction_row(i);
            b[r * self.dims..(r + 1) * self.dims].copy_from_slice(&junctions[i]);
        }
        let cl = 2 * s * (m - 1);
        for k in 0..s {
            let r = n - s + k;
            basis(2 * s, k, durations[m - 1], &mut beta);
            for q in k..2 * s {
                a.set(r, cl + q, beta[q]);
            }
            b[r * self.dims..(r + 1) * self.dims].copy_from_slice(&self.tail[k]);
        }
        let lu = a.factorize()?;
        lu.solve_in_place(&mut b, self.dims);
        self.coeffs = b;
        self.durations = durations.to_vec();
        self.lu = Some(lu);
        Ok(())
    }

    pub fn generate_params(&mut self, params: &SparseParams) -> Result<()> {
        self.generate(&params.junctions, &params.durations)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn trajectory(&self, n_robots: usize) -> Trajectory {
        Trajectory {
            s: self.s,
            dims: self.dims,
            n_robots,
            durations: self.durations.clone(),
            coeffs: self.coeffs.clone(),
        }
    }

    /// Pulls `dJ/dc` (shaped like the coefficients) and the direct `dJ/dT`
    /// back to `(dJ/dw, dJ/dT)` through the linear system of the last
    /// `generate` call.
    pub fn backprop(&self, grad_c: &[f64], grad_t: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let lu = self
            .lu
            .as_ref()
            .expect("generate must succeed before backprop");
        let s = self.s;
        let d = self.dims;
        let m = self.durations.len();
        assert_eq!(grad_c.len(), self.coeffs.len());
        assert_eq!(grad_t.len(), m);
        let mut g = grad_c.to_vec();
        lu.solve_transpose_in_place(&mut g, d);

        let grad_w = (0..m - 1)
            .map(|i| {
                let r = self.junction_row(i);
                g[r * d..(r + 1) * d].to_vec()
            })
            .collect();

        let mut out_t = grad_t.to_vec();
        let mut beta = vec![0.0; 2 * s];
        let mut deriv = vec![0.0; d];
        let mut subtract = |piece: usize, order: usize, row: usize, out: &mut f64| {
            basis(2 * s, order + 1, self.durations[piece], &mut beta);
            deriv.iter_mut().for_each(|v| *v = 0.0);
            for (q, &bq) in beta.iter().enumerate() {
                if bq != 0.0 {
                    let c = &self.coeffs[(2 * s * piece + q) * d..(2 * s * piece + q + 1) * d];
                    for (dv, &cv) in deriv.iter_mut().zip(c) {
                        *dv += bq * cv;
                    }
                }
            }
            let gr = &g[row * d..(row + 1) * d];
            *out -= gr.iter().zip(&deriv).map(|(a, b)| a * b).sum::<f64>();
        };
        for i in 0..m - 1 {
            let base = s + 2 * s * i;
            for j in 0..2 * s {
                let k = if j + 1 < s {
                    s + j
                } else if j + 1 == s {
                    0
                } else {
                    j - s
                };
                subtract(i, k, base + j, &mut out_t[i]);
            }
        }
        let n = 2 * s * m;
        for k in 0..s {
            subtract(m - 1, k, n - s + k, &mut out_t[m - 1]);
        }
        (grad_w, out_t)
    }
}

impl Trajectory {
    /// Minimum-effort trajectory through `params` with the given boundary
    /// derivative rows (orders `0..s`).
    pub fn build(
        s: usize,
        n_robots: usize,
        dims: usize,
        params: &SparseParams,
        head: &[Vec<f64>],
        tail: &[Vec<f64>],
    ) -> Result<Self> {
        let mut minco = Minco::new(s, dims);
        minco.set_boundary(head, tail)?;
        minco.generate_params(params)?;
        Ok(minco.trajectory(n_robots))
    }
}
