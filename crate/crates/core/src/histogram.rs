use serde::Serialize;

use crate::domain::PhasePoint;
use crate::error::{domain_err, Error, Result};

/// Uniform-bin histogram of the `(q_1, p_1)` marginal of a phase-space law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseHistogram {
    pub q_range: (f64, f64),
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
    /// Row-major `n_q x n_p` masses.
    pub masses: Vec<f64>,
    pub out_of_range: f64,
    /// Number of samples the histogram was built from.
    pub samples: usize,
}

impl PhaseHistogram {
    pub fn empty(q_range: (f64, f64), p_max: f64, n_q: usize, n_p: usize) -> Result<Self> {
        if !(q_range.0 < q_range.1) || !(p_max > 0.0) || n_q == 0 || n_p == 0 {
            return domain_err("histogram needs a nonempty position range, p_max > 0 and positive bin counts");
        }
        Ok(Self { q_range, p_max, n_q, n_p, masses: vec![0.0; n_q * n_p], out_of_range: 0.0, samples: 0 })
    }

    /// Equal-weight histogram of `points`.
    pub fn from_points(points: &[PhasePoint], q_range: (f64, f64), p_max: f64, n_q: usize, n_p: usize) -> Result<Self> {
        let mut h = Self::empty(q_range, p_max, n_q, n_p)?;
        if points.is_empty() {
            return domain_err("histogram of an empty sample");
        }
        let w = 1.0 / points.len() as f64;
        for x in points {
            match h.bin_of(x.q()[0], x.p()[0]) {
                Some(b) => h.masses[b] += w,
                None => h.out_of_range += w,
            }
        }
        h.samples = points.len();
        Ok(h)
    }

    /// Histogram with the same edges as `self`.
    pub fn like(&self, points: &[PhasePoint]) -> Result<Self> {
        Self::from_points(points, self.q_range, self.p_max, self.n_q, self.n_p)
    }

    /// `p_max` grown by factors of 1.5 until less than `tail` of the sample
    /// falls outside.
    pub fn adaptive(points: &[PhasePoint], q_range: (f64, f64), p_start: f64, n_q: usize, n_p: usize, tail: f64) -> Result<Self> {
        let mut p_max = p_start;
        loop {
            let h = Self::from_points(points, q_range, p_max, n_q, n_p)?;
            if h.out_of_range < tail || p_max > 1e6 {
                return Ok(h);
            }
            p_max *= 1.5;
        }
    }

    pub fn h_q(&self) -> f64 {
        (self.q_range.1 - self.q_range.0) / self.n_q as f64
    }

    pub fn h_p(&self) -> f64 {
        2.0 * self.p_max / self.n_p as f64
    }

    pub fn bin_of(&self, q: f64, p: f64) -> Option<usize> {
        let u = (q - self.q_range.0) / self.h_q();
        let v = (p + self.p_max) / self.h_p();
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (i, j) = (u as usize, v as usize);
        // the right edge belongs to the last bin
        let i = if i == self.n_q && q <= self.q_range.1 { i - 1 } else { i };
        let j = if j == self.n_p && p <= self.p_max { j - 1 } else { j };
        (i < self.n_q && j < self.n_p).then_some(i * self.n_p + j)
    }

    /// Bin rectangle `(q_lo, q_hi, p_lo, p_hi)`.
    pub fn bin_edges(&self, b: usize) -> (f64, f64, f64, f64) {
        let (i, j) = (b / self.n_p, b % self.n_p);
        let q_lo = self.q_range.0 + i as f64 * self.h_q();
        let p_lo = -self.p_max + j as f64 * self.h_p();
        (q_lo, q_lo + self.h_q(), p_lo, p_lo + self.h_p())
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.out_of_range
    }

    pub fn same_edges(&self, other: &Self) -> bool {
        self.q_range == other.q_range && self.p_max == other.p_max && self.n_q == other.n_q && self.n_p == other.n_p
    }

    /// Marginal over momentum.
    pub fn q_marginal(&self) -> Vec<f64> {
        self.masses.chunks(self.n_p).map(|row| row.iter().sum()).collect()
    }
}

/// `1/2 sum |m1 - m2| + 1/2 |out1 - out2|`.
pub fn tv_distance(h1: &PhaseHistogram, h2: &PhaseHistogram) -> Result<f64> {
    if !h1.same_edges(h2) {
        return Err(Error::Mismatch("histograms have different bin edges".into()));
    }
    let inner: f64 = h1.masses.iter().zip(&h2.masses).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * (inner + (h1.out_of_range - h2.out_of_range).abs())).min(1.0))
}
