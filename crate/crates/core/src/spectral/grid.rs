use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};

/// Tensor grid on `[a, b] x [-p_max, p_max]`.
///
/// Position nodes include both boundary columns; momentum nodes include both
/// truncation rows. Nodes are numbered so that the larger of the two strides
/// is the smaller dimension, which keeps the operator bandwidth low.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub p_max: f64,
    /// Interior position nodes.
    pub n_q: usize,
    pub n_p: usize,
    pub h_q: f64,
    pub h_p: f64,
    q_major: bool,
}

/// Default momentum cutoff: six equilibrium standard deviations `sigma / sqrt(2 gamma)`.
pub fn default_p_max(gamma: f64, sigma: f64) -> Option<f64> {
    (gamma > 0.0).then(|| 6.0 * sigma / (2.0 * gamma).sqrt())
}

impl Grid {
    pub fn new(a: f64, b: f64, p_max: f64, n_q: usize, n_p: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return domain_err(format!("grid needs a < b, got ({a}, {b})"));
        }
        if !(p_max > 0.0 && p_max.is_finite()) {
            return domain_err(format!("p_max must be positive, got {p_max}"));
        }
        if n_q < 8 || n_p < 8 {
            return domain_err(format!("grid needs at least 8 nodes per axis, got {n_q} x {n_p}"));
        }
        Ok(Self {
            a,
            b,
            p_max,
            n_q,
            n_p,
            h_q: (b - a) / (n_q + 1) as f64,
            h_p: 2.0 * p_max / (n_p - 1) as f64,
            q_major: n_p <= n_q + 2,
        })
    }

    /// Same grid with both node counts scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.a, self.b, self.p_max, self.n_q * factor, self.n_p * factor)
    }

    /// Position columns including the two boundary columns.
    pub fn n_cols(&self) -> usize {
        self.n_q + 2
    }

    pub fn len(&self) -> usize {
        self.n_cols() * self.n_p
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn q(&self, i: usize) -> f64 {
        if i == self.n_q + 1 {
            self.b
        } else {
            self.a + i as f64 * self.h_q
        }
    }

    pub fn p(&self, j: usize) -> f64 {
        if j == self.n_p - 1 {
            self.p_max
        } else {
            -self.p_max + j as f64 * self.h_p
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.q_major {
            i * self.n_p + j
        } else {
            j * self.n_cols() + i
        }
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        if self.q_major {
            (k / self.n_p, k % self.n_p)
        } else {
            (k % self.n_cols(), k / self.n_cols())
        }
    }

    pub fn is_boundary_column(&self, i: usize) -> bool {
        i == 0 || i == self.n_q + 1
    }

    /// Trapezoidal weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        let (i, j) = self.coords(k);
        let wq = if self.is_boundary_column(i) { 0.5 * self.h_q } else { self.h_q };
        let wp = if j == 0 || j == self.n_p - 1 { 0.5 * self.h_p } else { self.h_p };
        wq * wp
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// Position extent of the dual cell of column `i`.
    pub fn q_cell(&self, i: usize) -> (f64, f64) {
        let c = self.q(i);
        ((c - 0.5 * self.h_q).max(self.a), (c + 0.5 * self.h_q).min(self.b))
    }

    pub fn p_cell(&self, j: usize) -> (f64, f64) {
        let c = self.p(j);
        ((c - 0.5 * self.h_p).max(-self.p_max), (c + 0.5 * self.h_p).min(self.p_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_area() {
        for (nq, np) in [(8, 8), (10, 16), (31, 9)] {
            let g = Grid::new(-1.0, 2.0, 3.0, nq, np).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 3.0 * 6.0).abs() < 1e-12);
            assert!(g.weights().iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn indexing_roundtrip() {
        for (nq, np) in [(8, 12), (20, 8)] {
            let g = Grid::new(0.0, 1.0, 1.0, nq, np).unwrap();
            for k in 0..g.len() {
                let (i, j) = g.coords(k);
                assert_eq!(g.index(i, j), k);
            }
            assert_eq!(g.q(g.n_q + 1), 1.0);
            assert_eq!(g.p(0), -1.0);
            assert_eq!(g.p(g.n_p - 1), 1.0);
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::new(0.0, 1.0, 1.0, 7, 8).is_err());
        assert!(Grid::new(0.0, 1.0, 0.0, 8, 8).is_err());
        assert_eq!(default_p_max(0.0, 1.0), None);
        assert!((default_p_max(1.0, 1.0).unwrap() - 6.0 / 2f64.sqrt()).abs() < 1e-15);
    }
}
