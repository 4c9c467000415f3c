use serde::Serialize;

use super::operator::OperatorMatrix;
use crate::error::{Error, Result};

/// Principal eigenvalue and spectral gap of `P_1 = exp(A)` from the dense spectrum of `A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub lambda0: f64,
    /// `-log|z_2| - lambda0`, with `z_2` the second-largest modulus eigenvalue of `P_1`.
    pub alpha_star: f64,
    /// Eigenvalues of `P_1` whose modulus is within `1e-8` of `exp(-lambda0)`.
    pub top_multiplicity: usize,
    /// Set when the second eigenvalue sits within solver tolerance of the first;
    /// `alpha_star` is then only a lower bound.
    pub clustered: bool,
    pub n: usize,
}

pub fn spectral_gap(op: &OperatorMatrix) -> Result<GapReport> {
    let (a, _) = op.reduced();
    let n = a.n;
    let eig = a.to_dense().complex_eigenvalues();
    let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
    if re.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dense eigenvalues".into()));
    }
    re.sort_by(|x, y| y.total_cmp(x));
    let lambda0 = -re[0];
    let top = (-lambda0).exp();
    let top_multiplicity = re.iter().filter(|&&r| (r.exp() - top).abs() <= 1e-8).count();
    let second = re.get(1).copied().unwrap_or(f64::NEG_INFINITY);
    let alpha_star = -second - lambda0;
    let clustered = alpha_star <= 1e-8 * lambda0.abs().max(1.0);
    Ok(GapReport { lambda0, alpha_star: alpha_star.max(0.0), top_multiplicity, clustered, n })
}
