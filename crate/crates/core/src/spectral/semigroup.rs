//! Semigroup matrices `exp(tA)` by uniformisation.
//!
//! With `L >= max |a_ii|` the matrix `B = I + A / L` is entrywise nonnegative
//! and `exp(tA) = sum_k Pois(k; L t) B^k`, so every partial sum is
//! nonnegative and no clipping is needed.

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use super::operator::{Convention, Csr, OperatorMatrix};
use crate::error::{domain_err, Error, Result};
use crate::stats::pairwise_sum;

const BLOCK: usize = 32;

/// Action of `scale * exp(t A)` (or its transpose) on the free nodes of an operator.
#[derive(Debug, Clone)]
pub struct Semigroup {
    b: Csr,
    free: Vec<usize>,
    pos: Vec<usize>,
    n_full: usize,
    poisson: Vec<f64>,
    scale: f64,
    pub t: f64,
}

impl Semigroup {
    /// `exp(t A)` on the free nodes of `op`.
    pub fn new(op: &OperatorMatrix, t: f64) -> Result<Self> {
        Self::build(op, t, 1.0, false)
    }

    /// Semigroup of the absorbed adjoint process: `exp(-d gamma t) exp(t A*)`.
    pub fn adjoint_process(op_star: &OperatorMatrix, t: f64) -> Result<Self> {
        if op_star.convention != Convention::Psi {
            return Err(Error::Mismatch("adjoint semigroup needs the adjoint operator".into()));
        }
        Self::build(op_star, t, (-op_star.gamma * t).exp(), false)
    }

    /// Transposed action `scale * exp(t A)^T`.
    pub fn transposed(op: &OperatorMatrix, t: f64, scale: f64) -> Result<Self> {
        Self::build(op, t, scale, true)
    }

    fn build(op: &OperatorMatrix, t: f64, scale: f64, transpose: bool) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return domain_err(format!("semigroup time must be positive, got {t}"));
        }
        let (a, free) = op.reduced();
        let a = if transpose { a.transpose() } else { a };
        let rate = a.max_abs_diagonal().max(1e-300);
        let mut b = a;
        for r in 0..b.n {
            for k in b.row_ptr[r]..b.row_ptr[r + 1] {
                b.vals[k] /= rate;
                if b.cols[k] == r {
                    b.vals[k] += 1.0;
                }
            }
        }
        let mut pos = vec![usize::MAX; op.grid.len()];
        for (r, &k) in free.iter().enumerate() {
            pos[k] = r;
        }
        Ok(Self { b, free, pos, n_full: op.grid.len(), poisson: poisson_weights(rate * t), scale, t })
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Number of terms in the uniformised series.
    pub fn terms(&self) -> usize {
        self.poisson.len()
    }

    /// Applies to a row-major `n_free x m` block in place.
    fn apply_block(&self, block: &mut [f64], m: usize) {
        let n = self.b.n;
        let mut cur = block.to_vec();
        let mut next = vec![0.0; n * m];
        block.iter_mut().zip(&cur).for_each(|(o, c)| *o = self.poisson[0] * c);
        for &w in &self.poisson[1..] {
            for r in 0..n {
                let out = &mut next[r * m..(r + 1) * m];
                out.iter_mut().for_each(|v| *v = 0.0);
                for k in self.b.row_ptr[r]..self.b.row_ptr[r + 1] {
                    let (c, v) = (self.b.cols[k], self.b.vals[k]);
                    let src = &cur[c * m..(c + 1) * m];
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += v * s;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
            block.iter_mut().zip(&cur).for_each(|(o, c)| *o += w * c);
        }
        if self.scale != 1.0 {
            block.iter_mut().for_each(|v| *v *= self.scale);
        }
    }

    /// Applies to a function given on the full grid; pinned nodes read as zero
    /// and are returned as zero.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.free.iter().map(|&k| f[k]).collect();
        self.apply_block(&mut x, 1);
        let mut out = vec![0.0; self.n_full];
        for (r, &k) in self.free.iter().enumerate() {
            out[k] = x[r];
        }
        out
    }

    /// Applies to several full-grid functions at once.
    pub fn apply_many(&self, fs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = fs.len();
        let n = self.free.len();
        let mut block = vec![0.0; n * m];
        for (r, &k) in self.free.iter().enumerate() {
            for (c, f) in fs.iter().enumerate() {
                block[r * m + c] = f[k];
            }
        }
        self.apply_block(&mut block, m);
        (0..m)
            .map(|c| {
                let mut out = vec![0.0; self.n_full];
                for (r, &k) in self.free.iter().enumerate() {
                    out[k] = block[r * m + c];
                }
                out
            })
            .collect()
    }

    /// Columns `y` of the matrix on the full grid (zero for pinned `y`).
    pub fn columns(&self, ys: &[usize]) -> Vec<Vec<f64>> {
        let unit: Vec<Vec<f64>> = ys
            .iter()
            .map(|&y| {
                let mut e = vec![0.0; self.n_full];
                if self.pos[y] != usize::MAX {
                    e[y] = 1.0;
                }
                e
            })
            .collect();
        self.apply_many(&unit)
    }

    /// Dense matrix over the full grid.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let ys: Vec<usize> = (0..self.n_full).collect();
        let chunks: Vec<Vec<Vec<f64>>> = ys.par_chunks(BLOCK).map(|c| self.columns(c)).collect();
        let mut m = DMatrix::zeros(self.n_full, self.n_full);
        for (y, col) in chunks.into_iter().flatten().enumerate() {
            for (x, v) in col.into_iter().enumerate() {
                m[(x, y)] = v;
            }
        }
        m
    }
}

/// Poisson probabilities `k = 0..K` for mean `mu`, truncated once past the
/// mode and below `1e-18` of the peak.
fn poisson_weights(mu: f64) -> Vec<f64> {
    let lmu = mu.ln();
    let mut w = Vec::new();
    let mut k = 0usize;
    loop {
        let lw = -mu + k as f64 * lmu - ln_gamma(k as f64 + 1.0);
        let v = lw.exp();
        w.push(v);
        if k as f64 > mu && v < 1e-18 {
            break;
        }
        k += 1;
    }
    w
}

/// Dense semigroup matrix `exp(tA)` over all grid nodes with the clipped
/// negative mass (always zero for uniformisation, reported for the record).
pub fn semigroup_matrix(op: &OperatorMatrix, t: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut p = Semigroup::new(op, t)?.to_dense();
    let mut clipped = 0.0;
    p.iter_mut().for_each(|v| {
        if *v < 0.0 {
            clipped += -*v;
            *v = 0.0;
        }
    });
    Ok((p, clipped))
}

/// `sum_xy w_x w_y |K(x,y) - e^{d gamma t} K~(y,x)| / sum_xy w_x w_y K(x,y)` with
/// kernels `K = P W^{-1}`, `K~ = P~ W^{-1}`.
pub fn duality_residual(p: &DMatrix<f64>, p_tilde: &DMatrix<f64>, weights: &[f64], gamma: f64, dim: usize, t: f64) -> Result<f64> {
    let n = weights.len();
    if p.shape() != (n, n) || p_tilde.shape() != (n, n) {
        return Err(Error::Mismatch("semigroup matrices and weights disagree in size".into()));
    }
    let factor = (dim as f64 * gamma * t).exp();
    let mut num = Vec::with_capacity(n);
    let mut den = Vec::with_capacity(n);
    for y in 0..n {
        let (mut a, mut b) = (0.0, 0.0);
        for x in 0..n {
            let fwd = weights[x] * p[(x, y)];
            a += (fwd - factor * weights[y] * p_tilde[(y, x)]).abs();
            b += fwd.abs();
        }
        num.push(a);
        den.push(b);
    }
    Ok(pairwise_sum(&num) / pairwise_sum(&den))
}

/// Duality residual computed column by column without forming dense matrices.
pub fn duality_check(a: &OperatorMatrix, a_star: &OperatorMatrix, t: f64) -> Result<f64> {
    if a.grid != a_star.grid {
        return Err(Error::Mismatch("generator and adjoint live on different grids".into()));
    }
    let w = a.grid.weights();
    let fwd = Semigroup::new(a, t)?;
    // e^{d gamma t} P~^T = exp(t A*)^T
    let bwd = Semigroup::transposed(a_star, t, 1.0)?;
    let ys: Vec<usize> = (0..a.grid.len()).collect();
    let parts: Vec<(f64, f64)> = ys
        .par_chunks(BLOCK)
        .map(|chunk| {
            let pc = fwd.columns(chunk);
            let qc = bwd.columns(chunk);
            let (mut num, mut den) = (0.0, 0.0);
            for (c, &y) in chunk.iter().enumerate() {
                for x in 0..w.len() {
                    let f = w[x] * pc[c][x];
                    num += (f - w[y] * qc[c][x]).abs();
                    den += f.abs();
                }
            }
            (num, den)
        })
        .collect();
    let num: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let den: Vec<f64> = parts.iter().map(|p| p.1).collect();
    Ok(pairwise_sum(&num) / pairwise_sum(&den))
}

/// Dominant eigenvalue of a semigroup action by power iteration from a positive vector.
pub fn spectral_radius(sg: &Semigroup, tol: f64, max_iter: usize) -> Result<f64> {
    let mut x = vec![0.0; sg.n_full];
    for &k in &sg.free {
        x[k] = 1.0;
    }
    let mut r = 0.0;
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let y = sg.apply(&x);
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rq = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / (nx * nx);
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res: f64 = y.iter().zip(&x).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt() / ny;
        history.push(res);
        x = y.into_iter().map(|v| v / ny).collect();
        let done = (rq - r).abs() <= tol * rq.abs() && res < tol.sqrt();
        r = rq;
        if done {
            return Ok(r);
        }
    }
    Err(Error::Convergence { iterations: max_iter, history })
}
