use super::banded::BandedLu;
use super::operator::Csr;
use crate::error::{domain_err, Error, Result};
use crate::model::ForceField;

/// Principal Dirichlet eigenpair of the overdamped forward operator
/// `psi -> -(F psi)' + psi'' / beta` on `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedEigen {
    pub lambda_bar: f64,
    /// Interior node positions.
    pub q: Vec<f64>,
    /// Eigenfunction at the interior nodes, normalised to unit maximum.
    pub psi_bar: Vec<f64>,
}

/// Centred second-order discretisation on `n` interior nodes.
pub fn overdamped_eigen(a: f64, b: f64, n: usize, beta: f64, force: &ForceField) -> Result<OverdampedEigen> {
    if !(a < b) || n < 3 || !(beta > 0.0) {
        return domain_err("overdamped problem needs a < b, at least 3 nodes and beta > 0");
    }
    let h = (b - a) / (n + 1) as f64;
    let q: Vec<f64> = (1..=n).map(|i| a + i as f64 * h).collect();
    let f: Vec<f64> = q.iter().map(|&x| force.eval_1d(x)).collect();
    let diff = 1.0 / (beta * h * h);
    // rows of -L
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![(i, 2.0 * diff)];
            if i > 0 {
                row.push((i - 1, -diff - f[i - 1] / (2.0 * h)));
            }
            if i + 1 < n {
                row.push((i + 1, -diff + f[i + 1] / (2.0 * h)));
            }
            row
        })
        .collect();
    let m = Csr::from_rows(rows);
    let lu = BandedLu::factor(&m, 0.0)?;
    let mut x = vec![1.0; n];
    let mut history = Vec::new();
    for _ in 0..500 {
        lu.solve_in_place(&mut x);
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
        let mx = m.matvec(&x);
        let lambda = mx.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        // relative to the operator scale, which sets the rounding floor
        let res = mx.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt() / lambda.max(2.0 * diff);
        history.push(res);
        if res < 1e-14 {
            let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Ok(OverdampedEigen { lambda_bar: lambda, q, psi_bar: x.iter().map(|v| v / top).collect() });
        }
    }
    Err(Error::Convergence { iterations: 500, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_ground_state() {
        let e = overdamped_eigen(0.0, 1.0, 256, 1.0, &ForceField::Zero).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((e.lambda_bar - pi2).abs() / pi2 < 1e-3);
        for (q, v) in e.q.iter().zip(&e.psi_bar) {
            assert!((v - (std::f64::consts::PI * q).sin()).abs() < 1e-3);
        }
    }
}
