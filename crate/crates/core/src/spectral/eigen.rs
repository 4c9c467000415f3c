//! Principal eigenpairs by shifted inverse iteration.

use serde::Serialize;

use super::banded::BandedLu;
use super::grid::Grid;
use super::operator::{build_adjoint_generator, build_generator, Csr, OperatorMatrix};
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Shift as a fraction of the current eigenvalue estimate.
    pub shift_fraction: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 300, shift_fraction: 0.99 }
    }
}

/// Principal mode of one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda: f64,
    /// Node values on the full grid, zero at pinned nodes, unit weighted sum.
    pub vector: Vec<f64>,
    /// `||A v + lambda v|| / ||v||` on the free nodes.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub lambda0: f64,
    pub lambda0_adjoint: f64,
    pub phi_vec: Vec<f64>,
    pub psi_vec: Vec<f64>,
    pub residual_phi: f64,
    pub residual_psi: f64,
}

impl EigenPair {
    /// `|lambda0(A) - lambda0(A*)|`.
    pub fn consistency(&self) -> f64 {
        (self.lambda0 - self.lambda0_adjoint).abs()
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn residual(a: &Csr, x: &[f64], lambda: f64) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(x).map(|(ax, x)| (ax + lambda * x).powi(2)).sum();
    r.sqrt() / norm2(x)
}

/// `lambda` with `A x ~ -lambda x`, from the Rayleigh quotient.
fn rayleigh(a: &Csr, x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    -ax.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>()
}

/// Eigenvalue of smallest magnitude of `-A` on the free nodes, which is the
/// principal one for a sub-Markov generator, with a positive eigenvector.
pub fn principal_mode(op: &OperatorMatrix, opts: &EigenOptions) -> Result<Mode> {
    let (a, free) = op.reduced();
    let n = a.n;
    let mut neg = a.clone();
    neg.vals.iter_mut().for_each(|v| *v = -*v);
    let mut shift = 0.0;
    let mut lu = BandedLu::factor(&neg, shift)?;
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut history = Vec::new();
    let mut reshifted = false;
    for it in 1..=opts.max_iter {
        lu.solve_in_place(&mut x);
        let nrm = norm2(&x);
        let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        x.iter_mut().for_each(|v| *v *= sign / nrm);
        let lambda = rayleigh(&a, &x);
        let res = residual(&a, &x, lambda) / lambda.abs().max(1.0);
        history.push(res);
        if res < opts.tol {
            let mut vector = vec![0.0; op.grid.len()];
            for (r, &k) in free.iter().enumerate() {
                vector[k] = x[r];
            }
            let mass: f64 = vector.iter().enumerate().map(|(k, v)| v * op.grid.weight(k)).sum();
            vector.iter_mut().for_each(|v| *v /= mass);
            return Ok(Mode { lambda, vector, residual: residual(&a, &x, lambda), iterations: it });
        }
        if !reshifted && res < 1e-3 && lambda > 0.0 {
            shift = opts.shift_fraction * lambda;
            lu = BandedLu::factor(&neg, shift)?;
            reshifted = true;
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, history })
}

/// Principal eigenpair of the generator and its adjoint.
pub fn principal_eigenpair(a: &OperatorMatrix, a_star: &OperatorMatrix) -> Result<EigenPair> {
    principal_eigenpair_with(a, a_star, &EigenOptions::default())
}

pub fn principal_eigenpair_with(a: &OperatorMatrix, a_star: &OperatorMatrix, opts: &EigenOptions) -> Result<EigenPair> {
    if a.grid != a_star.grid {
        return Err(Error::Mismatch("generator and adjoint live on different grids".into()));
    }
    let phi = principal_mode(a, opts)?;
    let psi = principal_mode(a_star, opts)?;
    Ok(EigenPair {
        lambda0: phi.lambda,
        lambda0_adjoint: psi.lambda,
        phi_vec: phi.vector,
        psi_vec: psi.vector,
        residual_phi: phi.residual,
        residual_psi: psi.residual,
    })
}

/// Assembles both operators on `grid` and solves.
pub fn solve_grid(grid: &Grid, params: &ModelParams) -> Result<(OperatorMatrix, OperatorMatrix, EigenPair)> {
    let a = build_generator(grid, params)?;
    let a_star = build_adjoint_generator(grid, params)?;
    let pair = principal_eigenpair(&a, &a_star)?;
    Ok((a, a_star, pair))
}

/// Principal eigenvalue of the generator alone.
pub fn lambda0_on(grid: &Grid, params: &ModelParams) -> Result<f64> {
    Ok(principal_mode(&build_generator(grid, params)?, &EigenOptions::default())?.lambda)
}

/// Grid-refinement study with first-order Richardson extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RichardsonStudy {
    /// `(n_q, n_p, lambda0)` per level, coarse to fine.
    pub levels: Vec<(usize, usize, f64)>,
    /// `2 lambda_{h/2} - lambda_h` for consecutive levels.
    pub extrapolated: Vec<f64>,
}

impl RichardsonStudy {
    /// Finest extrapolated value.
    pub fn best(&self) -> f64 {
        *self.extrapolated.last().unwrap_or(&self.levels.last().expect("nonempty study").2)
    }

    /// Difference between the last two extrapolated values, used as an error bar.
    pub fn spread(&self) -> f64 {
        match self.extrapolated.as_slice() {
            [.., x, y] => (x - y).abs(),
            _ => f64::INFINITY,
        }
    }

    /// Observed order from three consecutive levels.
    pub fn observed_order(&self) -> Option<f64> {
        match self.levels.as_slice() {
            [.., a, b, c] => Some(((a.2 - b.2) / (b.2 - c.2)).abs().log2()),
            _ => None,
        }
    }
}

/// Solves on `base`, `2 base`, ... (`levels` grids) and extrapolates.
pub fn richardson(base: &Grid, params: &ModelParams, levels: usize) -> Result<RichardsonStudy> {
    let mut out = Vec::with_capacity(levels);
    for l in 0..levels {
        let g = base.refined(1 << l)?;
        out.push((g.n_q, g.n_p, lambda0_on(&g, params)?));
    }
    let extrapolated = out.windows(2).map(|w| 2.0 * w[1].2 - w[0].2).collect();
    Ok(RichardsonStudy { levels: out, extrapolated })
}
