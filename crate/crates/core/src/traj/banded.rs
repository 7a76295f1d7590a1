//! Banded LU factorization with partial pivoting and forward/transposed
//! solves on row-major multi-column right-hand sides.

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals. Storage keeps
/// `kl` extra super-diagonals for fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(
            j + self.kl >= i && j <= i + self.kl + self.ku,
            "({i},{j}) outside band"
        );
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// Sets an entry inside the declared band (`-kl <= j - i <= ku`).
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i},{j}) outside band"
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Factorizes in place. Fails on an exactly zero pivot or a non-finite
    /// entry.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot in column {k}")));
            }
            piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let d = self.get(k, k);
            for r in k + 1..=last {
                let ir = self.idx(r, k);
                let l = self.data[ir] / d;
                self.data[ir] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let ukj = self.data[self.idx(k, j)];
                        let irj = self.idx(r, j);
                        self.data[irj] -= l * ukj;
                    }
                }
            }
        }
        Ok(BandedLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    /// Solves `A x = b` in place; `b` is row-major with `cols` columns.
    pub fn solve_in_place(&self, b: &mut [f64], cols: usize) {
        let n = self.m.n;
        let (kl, ku) = (self.m.kl, self.m.ku);
        assert_eq!(b.len(), n * cols);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                for c in 0..cols {
                    b.swap(k * cols + c, p * cols + c);
                }
            }
            for r in k + 1..=(k + kl).min(n - 1) {
                let l = self.m.get(r, k);
                if l != 0.0 {
                    for c in 0..cols {
                        b[r * cols + c] -= l * b[k * cols + c];
                    }
                }
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                let u = self.m.get(k, j);
                if u != 0.0 {
                    for c in 0..cols {
                        b[k * cols + c] -= u * b[j * cols + c];
                    }
                }
            }
            let d = self.m.get(k, k);
            for c in 0..cols {
                b[k * cols + c] /= d;
            }
        }
    }

    /// Solves `A^T x = b` in place with the same factorization.
    pub fn solve_transpose_in_place(&self, b: &mut [f64], cols: usize) {
        let n = self.m.n;
        let (kl, ku) = (self.m.kl, self.m.ku);
        assert_eq!(b.len(), n * cols);
        for k in 0..n {
            for i in k.saturating_sub(kl + ku)..k {
                let u = self.m.get(i, k);
                if u != 0.0 {
                    for c in 0..cols {
                        b[k * cols + c] -= u * b[i * cols + c];
                    }
                }
            }
            let d = self.m.get(k, k);
            for c in 0..cols {
                b[k * cols + c] /= d;
            }
        }
        for k in (0..n).rev() {
            for r in k + 1..=(k + kl).min(n - 1) {
                let l = self.m.get(r, k);
                if l != 0.0 {
                    for c in 0..cols {
                        b[k * cols + c] -= l * b[r * cols + c];
                    }
                }
            }
            let p = self.piv[k];
            if p != k {
                for c in 0..cols {
                    b.swap(k * cols + c, p * cols + c);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(
        n: usize,
        kl: usize,
        ku: usize,
        rng: &mut ChaCha8Rng,
    ) -> (BandMatrix, DMatrix<f64>) {
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // small diagonal forces pivoting
                let v = if i == j {
                    0.01 * rng.gen_range(-1.0..1.0)
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                b.set(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (24, 8, 8), (40, 3, 6), (17, 6, 2)] {
            let (band, dense) = random_band(n, kl, ku, &mut rng);
            let lu = band.factorize().unwrap();
            let cols = 3;
            let rhs: Vec<f64> = (0..n * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = rhs.clone();
            lu.solve_in_place(&mut x, cols);
            let xm = DMatrix::from_row_slice(n, cols, &x);
            let bm = DMatrix::from_row_slice(n, cols, &rhs);
            assert!(
                (&dense * &xm - &bm).norm() < 1e-9 * (1.0 + xm.norm()),
                "n={n}"
            );
            let mut y = rhs.clone();
            lu.solve_transpose_in_place(&mut y, cols);
            let ym = DMatrix::from_row_slice(n, cols, &y);
            assert!(
                (dense.transpose() * &ym - &bm).norm() < 1e-9 * (1.0 + ym.norm()),
                "n={n} transpose"
            );
        }
    }

    #[test]
    fn singular_detected() {
        let mut b = BandMatrix::zeros(3, 1, 1);
        b.set(0, 0, 1.0);
        b.set(1, 0, 1.0);
        b.set(2, 2, 1.0);
        assert!(matches!(b.factorize(), Err(Error::SingularSystem(_))));
    }
}
