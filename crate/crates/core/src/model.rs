//! Model parameters of the kinetic Langevin dynamics
//! `dq = p dt`, `dp = F(q) dt - gamma p dt + sigma dB`.

use serde::{Deserialize, Serialize};

use crate::domain::{PositionDomain, MAX_DIM};
use crate::error::{domain_err, Error, Result};

/// Force field `F: R^d -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceField {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `-k (q - q0)`.
    Linear {
        k: f64,
        center: Vec<f64>,
    },
    /// `-grad V` for `V(q) = height * sum_i (q_i^2 - 1)^2`.
    DoubleWell {
        height: f64,
    },
    /// One-dimensional table on uniform nodes spanning `[lo, hi]`, linearly
    /// interpolated and held constant outside.
    Tabulated {
        lo: f64,
        hi: f64,
        values: Vec<f64>,
    },
}

impl ForceField {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config { key: "model.force".into(), message: m });
        match self {
            ForceField::Zero | ForceField::DoubleWell { .. } => {}
            ForceField::Constant { value } => {
                if value.len() != dim {
                    return bad(format!("constant force needs {dim} components"));
                }
            }
            ForceField::Linear { center, .. } => {
                if center.len() != dim {
                    return bad(format!("linear force center needs {dim} components"));
                }
            }
            ForceField::Tabulated { lo, hi, values } => {
                if dim != 1 {
                    return bad("tabulated force is one-dimensional".into());
                }
                if !(lo < hi) || values.len() < 2 {
                    return bad("tabulated force needs lo < hi and at least two values".into());
                }
            }
        }
        let finite = match self {
            ForceField::Zero => true,
            ForceField::Constant { value } => value.iter().all(|v| v.is_finite()),
            ForceField::Linear { k, center } => k.is_finite() && center.iter().all(|v| v.is_finite()),
            ForceField::DoubleWell { height } => height.is_finite(),
            ForceField::Tabulated { lo, hi, values } => {
                lo.is_finite() && hi.is_finite() && values.iter().all(|v| v.is_finite())
            }
        };
        if !finite {
            return bad("force parameters must be finite".into());
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ForceField::Zero => true,
            ForceField::Constant { value } => value.iter().all(|v| *v == 0.0),
            ForceField::Linear { k, .. } => *k == 0.0,
            ForceField::DoubleWell { height } => *height == 0.0,
            ForceField::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Writes `F(q)` into `out[..q.len()]`.
    #[inline]
    pub fn eval_into(&self, q: &[f64], out: &mut [f64; MAX_DIM]) {
        match self {
            ForceField::Zero => *out = [0.0; MAX_DIM],
            ForceField::Constant { value } => out[..value.len()].copy_from_slice(value),
            ForceField::Linear { k, center } => {
                for i in 0..q.len() {
                    out[i] = -k * (q[i] - center[i]);
                }
            }
            ForceField::DoubleWell { height } => {
                for i in 0..q.len() {
                    out[i] = -4.0 * height * q[i] * (q[i] * q[i] - 1.0);
                }
            }
            ForceField::Tabulated { lo, hi, values } => {
                let n = values.len() - 1;
                let s = ((q[0] - lo) / (hi - lo) * n as f64).clamp(0.0, n as f64);
                let i = (s.floor() as usize).min(n - 1);
                let w = s - i as f64;
                out[0] = (1.0 - w) * values[i] + w * values[i + 1];
            }
        }
    }

    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        let mut out = [0.0; MAX_DIM];
        self.eval_into(q, &mut out);
        out[..q.len()].to_vec()
    }

    /// One-dimensional evaluation.
    #[inline]
    pub fn eval_1d(&self, q: f64) -> f64 {
        let mut out = [0.0; MAX_DIM];
        self.eval_into(&[q], &mut out);
        out[0]
    }

    /// `sup_{q in closure(O)} |F(q)|`, exact for affine fields and evaluated on a
    /// fine lattice of the bounding box otherwise.
    pub fn sup_norm(&self, domain: &PositionDomain) -> f64 {
        let d = domain.dim();
        let norm = |v: &[f64; MAX_DIM]| v[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
        match self {
            ForceField::Zero => 0.0,
            ForceField::Constant { value } => value.iter().map(|x| x * x).sum::<f64>().sqrt(),
            _ => {
                let (lo, hi) = domain.bounding_box();
                let per_axis = match d {
                    1 => 4001,
                    2 => 201,
                    _ => 41,
                };
                let mut best: f64 = 0.0;
                let mut idx = [0usize; MAX_DIM];
                let mut out = [0.0; MAX_DIM];
                loop {
                    let q: Vec<f64> = (0..d)
                        .map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (per_axis - 1) as f64)
                        .collect();
                    if domain.signed_distance(&q) >= -domain.tol_b() {
                        self.eval_into(&q, &mut out);
                        best = best.max(norm(&out));
                    }
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < per_axis {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == d {
                            return best;
                        }
                    }
                }
            }
        }
    }
}

/// Friction `gamma` (any sign), noise `sigma > 0`, dimension and force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub sigma: f64,
    pub dim: usize,
    pub force: ForceField,
}

impl ModelParams {
    pub fn new(gamma: f64, sigma: f64, dim: usize, force: ForceField) -> Result<Self> {
        let m = Self { gamma, sigma, dim, force };
        m.validate()?;
        Ok(m)
    }

    /// Force-free one-dimensional model.
    pub fn free_1d(gamma: f64, sigma: f64) -> Result<Self> {
        Self::new(gamma, sigma, 1, ForceField::Zero)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::Config { key: "model.gamma".into(), message: "must be finite".into() });
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config {
                key: "model.sigma".into(),
                message: format!("sigma must be > 0, got {}", self.sigma),
            });
        }
        if self.dim == 0 || self.dim > MAX_DIM {
            return domain_err(format!("dimension must be in 1..={MAX_DIM}"));
        }
        self.force.validate(self.dim)
    }

    /// `max(-gamma, 0)`.
    pub fn gamma_minus(&self) -> f64 {
        (-self.gamma).max(0.0)
    }

    /// Parameters of the time-reversed dynamics written in the variables
    /// `(q, -p)`: same force, friction `-gamma`.
    pub fn reversed(&self) -> Self {
        Self { gamma: -self.gamma, ..self.clone() }
    }
}
