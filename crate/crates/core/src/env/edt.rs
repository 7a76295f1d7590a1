//! Exact squared Euclidean distance transform by lower envelopes of
//! parabolas, applied separably along each axis.

const FAR: f64 = 1e20;

/// One-dimensional transform of `f` into `out`; `v` and `z` are scratch
/// buffers of length `n` and `n + 1`.
fn transform_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance (in cells) from every cell to the nearest cell where
/// `seed` is true. Cells are indexed x-fastest. Returns `None` when no cell
/// is seeded.
pub fn squared_distance(seed: &[bool], dims: [usize; 3]) -> Option<Vec<f64>> {
    let [nx, ny, nz] = dims;
    assert_eq!(seed.len(), nx * ny * nz);
    if !seed.iter().any(|&s| s) {
        return None;
    }
    let mut grid: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let nmax = nx.max(ny).max(nz);
    let mut f = vec![0.0; nmax];
    let mut out = vec![0.0; nmax];
    let mut v = vec![0usize; nmax];
    let mut z = vec![0.0; nmax + 1];
    let idx = |x: usize, y: usize, zz: usize| x + nx * (y + ny * zz);
    for zz in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                f[x] = grid[idx(x, y, zz)];
            }
            transform_1d(&f[..nx], &mut out[..nx], &mut v, &mut z);
            for x in 0..nx {
                grid[idx(x, y, zz)] = out[x];
            }
        }
    }
    for zz in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                f[y] = grid[idx(x, y, zz)];
            }
            transform_1d(&f[..ny], &mut out[..ny], &mut v, &mut z);
            for y in 0..ny {
                grid[idx(x, y, zz)] = out[y];
            }
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            for zz in 0..nz {
                f[zz] = grid[idx(x, y, zz)];
            }
            transform_1d(&f[..nz], &mut out[..nz], &mut v, &mut z);
            for zz in 0..nz {
                grid[idx(x, y, zz)] = out[zz];
            }
        }
    }
    Some(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(seed: &[bool], dims: [usize; 3]) -> Vec<f64> {
        let [nx, ny, _] = dims;
        let coords = |i: usize| {
            (
                (i % nx) as f64,
                ((i / nx) % ny) as f64,
                (i / (nx * ny)) as f64,
            )
        };
        let seeds: Vec<_> = (0..seed.len()).filter(|&i| seed[i]).map(coords).collect();
        (0..seed.len())
            .map(|i| {
                let (x, y, z) = coords(i);
                seeds
                    .iter()
                    .map(|&(a, b, c)| (x - a).powi(2) + (y - b).powi(2) + (z - c).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &dims in &[[1, 1, 1], [7, 1, 1], [5, 6, 7], [12, 9, 4], [16, 16, 16]] {
            for density in [0.01, 0.1, 0.5] {
                let n = dims[0] * dims[1] * dims[2];
                let mut seed: Vec<bool> = (0..n).map(|_| rng.gen_bool(density)).collect();
                seed[rng.gen_range(0..n)] = true;
                let fast = squared_distance(&seed, dims).unwrap();
                assert_eq!(fast, brute(&seed, dims), "dims {dims:?}");
            }
        }
    }

    #[test]
    fn empty_seed_set() {
        assert!(squared_distance(&[false; 8], [2, 2, 2]).is_none());
    }
}
