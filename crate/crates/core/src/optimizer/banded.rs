//! Symmetric positive definite band matrices and their Cholesky factorization.
//! Mesh energies only couple unknowns of neighbouring vertices, so the normal
//! matrix has a half-bandwidth of about two mesh rows of unknowns.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Lower band of an `n x n` symmetric matrix, `bw` sub-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i`, left to right.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: alloc::vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to `(i, j)` (and implicitly `(j, i)`). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            i - j <= self.bw,
            "entry ({i}, {j}) outside bandwidth {}",
            self.bw
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = alloc::vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i - i.min(self.bw);
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
        y
    }

    /// In-place `L L^T` factorization.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let mut l = self.clone();
        let max_diag = (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max);
        let tiny = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
        let bw = self.bw;
        for i in 0..self.n {
            let lo_i = i - i.min(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j - j.min(bw));
                let mut sum = l.data[l.idx(i, j)];
                let (ri, rj) = (l.idx(i, lo), l.idx(j, lo));
                for k in 0..j - lo {
                    sum -= l.data[ri + k] * l.data[rj + k];
                }
                let at = l.idx(i, j);
                if i == j {
                    if !(sum > tiny) {
                        return Err(Error::SolverFailure(alloc::format!(
                            "matrix not positive definite at unknown {i} (pivot {sum:e}, max diagonal {max_diag:e})"
                        )));
                    }
                    l.data[at] = sum.sqrt();
                } else {
                    l.data[at] = sum / l.data[l.idx(j, j)];
                }
            }
        }
        Ok(BandCholesky { l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, bw) = (l.n, l.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i - i.min(bw);
            let mut s = y[i];
            for j in lo..i {
                s -= l.data[l.idx(i, j)] * y[j];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for j in i + 1..=hi {
                s -= l.data[l.idx(j, i)] * y[j];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        y
    }

    /// Smallest and largest pivot, a cheap conditioning indicator.
    pub fn pivot_range(&self) -> (f64, f64) {
        (0..self.l.n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = self.l.get(i, i);
            (lo.min(d), hi.max(d))
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` with two rounds of iterative refinement and checks
/// `|A x - b| < 1e-8 (1 + |b|)`.
pub fn solve_spd(a: &BandMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a.cholesky()?;
    let mut x = chol.solve(b);
    let residual =
        |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    for _ in 0..2 {
        let r = residual(&x);
        let dx = chol.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    let r = norm(&residual(&x));
    let bound = 1e-8 * (1.0 + norm(b));
    if !(r < bound) || x.iter().any(|v| !v.is_finite()) {
        let (lo, hi) = chol.pivot_range();
        return Err(Error::SolverFailure(alloc::format!(
            "normal-equation residual {r:e} exceeds {bound:e} (pivot range {lo:e}..{hi:e})"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use nalgebra::{DMatrix, DVector};

    fn random_band(n: usize, bw: usize, seed: u64) -> (BandMatrix, DMatrix<f64>) {
        // B^T B for an upper-banded, diagonally dominant B is banded and SPD.
        let mut r = CounterRng::new(seed, 1);
        let mut b = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..(i + bw + 1).min(n) {
                b[(i, j)] = r.uniform_range(-1.0, 1.0);
            }
            b[(i, i)] += 3.0;
        }
        let dense = b.transpose() * &b;
        let mut band = BandMatrix::zeros(n, 2 * bw);
        for i in 0..n {
            for j in 0..=i {
                if dense[(i, j)] != 0.0 {
                    band.add(i, j, dense[(i, j)]);
                }
            }
        }
        (band, dense)
    }

    #[test]
    fn matches_dense_solver() {
        for (n, bw, seed) in [(1, 0, 1), (7, 2, 2), (60, 5, 3), (200, 11, 4)] {
            let (band, dense) = random_band(n, bw, seed);
            let mut r = CounterRng::new(seed, 2);
            let b: Vec<f64> = (0..n).map(|_| r.uniform_range(-10.0, 10.0)).collect();
            let x = solve_spd(&band, &b).unwrap();
            let oracle = dense
                .clone()
                .cholesky()
                .unwrap()
                .solve(&DVector::from_vec(b.clone()));
            for i in 0..n {
                assert!((x[i] - oracle[i]).abs() < 1e-9 * (1.0 + oracle[i].abs()));
            }
            let ax = band.mul_vec(&x);
            let dense_ax = &dense * DVector::from_vec(x.clone());
            for i in 0..n {
                assert!((ax[i] - dense_ax[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut m = BandMatrix::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, -1.0);
        m.add(2, 2, 1.0);
        assert!(matches!(
            solve_spd(&m, &[1.0, 1.0, 1.0]),
            Err(Error::SolverFailure(_))
        ));
    }
}
