//! Symmetric positive-definite solves for the normal equations.
//!
//! The sparse path stores the lower triangle in envelope (skyline) form:
//! row `r` keeps the contiguous columns `first[r]..=r`. Cholesky fill-in
//! never leaves the envelope, so factorization happens in place.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    /// Allocates a zeroed matrix with the given per-row first column.
    pub fn new(first: Vec<usize>) -> Self {
        let mut row_start = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (r, &f) in first.iter().enumerate() {
            debug_assert!(f <= r);
            row_start.push(total);
            total += r - f + 1;
        }
        row_start.push(total);
        Skyline {
            first,
            row_start,
            data: vec![0.0; total],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && c >= self.first[r]);
        self.row_start[r] + (c - self.first[r])
    }

    /// Adds to the lower-triangle entry `(r, c)`; `c ≤ r` must be inside the
    /// envelope.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.index(r, c);
        self.data[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if c < self.first[r] {
            0.0
        } else {
            self.data[self.index(r, c)]
        }
    }

    pub fn diagonal(&self, r: usize) -> f64 {
        self.data[self.row_start[r + 1] - 1]
    }

    pub fn add_diagonal(&mut self, r: usize, v: f64) {
        let i = self.row_start[r + 1] - 1;
        self.data[i] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |r, c| self.get(r, c))
    }

    /// In-place `LLᵀ` factorization. Returns `false` on a non-positive pivot.
    pub fn factorize(&mut self) -> bool {
        let n = self.dim();
        for r in 0..n {
            let fr = self.first[r];
            let rs = self.row_start[r];
            for c in fr..r {
                let fc = self.first[c];
                let k0 = fr.max(fc);
                let cs = self.row_start[c];
                let row_r = &self.data[rs + (k0 - fr)..rs + (c - fr)];
                let row_c = &self.data[cs + (k0 - fc)..cs + (c - fc)];
                let dot: f64 = row_r.iter().zip(row_c).map(|(a, b)| a * b).sum();
                let pivot = self.data[self.row_start[c + 1] - 1];
                let i = rs + (c - fr);
                self.data[i] = (self.data[i] - dot) / pivot;
            }
            let row = &self.data[rs..rs + (r - fr)];
            let sq: f64 = row.iter().map(|v| v * v).sum();
            let d = self.data[rs + (r - fr)] - sq;
            if d <= 0.0 || !d.is_finite() {
                return false;
            }
            self.data[rs + (r - fr)] = d.sqrt();
        }
        true
    }

    /// Solves `LLᵀx = b` with a factorized matrix.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = b.clone();
        for r in 0..n {
            let fr = self.first[r];
            let rs = self.row_start[r];
            let mut acc = y[r];
            for c in fr..r {
                acc -= self.data[rs + (c - fr)] * y[c];
            }
            y[r] = acc / self.data[rs + (r - fr)];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let rs = self.row_start[r];
            y[r] /= self.data[rs + (r - fr)];
            let yr = y[r];
            for c in fr..r {
                y[c] -= self.data[rs + (c - fr)] * yr;
            }
        }
        y
    }
}

/// Dense Cholesky reference; `None` when the matrix is not positive definite.
pub fn dense_solve(h: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    h.clone().cholesky().map(|c| c.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_support::rng;
    use rand::Rng;

    fn random_banded_spd(n: usize, seed: u64) -> (Skyline, DMatrix<f64>) {
        let mut rng = rng(seed);
        let first: Vec<usize> = (0..n)
            .map(|r| {
                if r == 0 {
                    0
                } else {
                    r.saturating_sub(rng.random_range(0..5))
                }
            })
            .collect();
        // occasional long-range coupling
        let first: Vec<usize> = first
            .iter()
            .enumerate()
            .map(|(r, &f)| if r > 10 && r % 13 == 0 { 0 } else { f })
            .collect();
        let mut sky = Skyline::new(first.clone());
        let mut dense = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in first[r]..r {
                let v = rng.random_range(-1.0..1.0);
                sky.add(r, c, v);
                dense[(r, c)] = v;
                dense[(c, r)] = v;
            }
        }
        for r in 0..n {
            let d = 20.0 + rng.random_range(0.0..1.0);
            sky.add(r, r, d);
            dense[(r, r)] = d;
        }
        (sky, dense)
    }

    #[test]
    fn skyline_matches_dense_cholesky() {
        for seed in 0..10 {
            let n = 60;
            let (mut sky, dense) = random_banded_spd(n, seed);
            assert_eq!(sky.to_dense(), dense);
            let b = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());
            let reference = dense_solve(&dense, &b).unwrap();
            assert!(sky.factorize());
            let x = sky.solve(&b);
            assert!((x - reference).amax() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_fails() {
        let mut sky = Skyline::new(vec![0, 0]);
        sky.add(0, 0, 1.0);
        sky.add(1, 0, 2.0);
        sky.add(1, 1, 1.0);
        assert!(!sky.factorize());
    }
}
