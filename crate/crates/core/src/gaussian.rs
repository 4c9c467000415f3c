//! Closed-form law of the force-free reference process
//! `dq = p dt`, `dp = -gamma p dt + sigma / sqrt(alpha) dB`,
//! the constant of the Gaussian upper bound and the high-velocity envelope.
//!
//! The covariance factorises across coordinates into identical 2x2 blocks
//! `[c_qq, c_qp; c_qp, c_pp] / alpha`, whose determinant is evaluated through
//! `phi_det` rather than by subtracting products.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::domain::{PhasePoint, PositionDomain, MAX_DIM};
use crate::error::{domain_err, Result};
use crate::model::ModelParams;
use crate::special::{phi1, phi2, phi_det};

/// Mean and per-coordinate covariance block of the reference process at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub m_q: [f64; MAX_DIM],
    pub m_p: [f64; MAX_DIM],
    pub c_qq: f64,
    pub c_qp: f64,
    pub c_pp: f64,
    /// `c_qq c_pp - c_qp^2`, computed as `sigma^4 t^4 phi(gamma t) / 12`.
    pub det: f64,
    pub alpha: f64,
    pub dim: usize,
}

impl GaussianMoments {
    /// Covariance entries scaled by `1/alpha`: `(qq, qp, pp, det)`.
    pub fn scaled_block(&self) -> (f64, f64, f64, f64) {
        let a = self.alpha;
        (self.c_qq / a, self.c_qp / a, self.c_pp / a, self.det / (a * a))
    }

    /// Lower Cholesky factor `(l11, l21, l22)` of the scaled block.
    pub fn cholesky(&self) -> (f64, f64, f64) {
        let (qq, qp, _, det) = self.scaled_block();
        let l11 = qq.sqrt();
        (l11, qp / l11, (det / qq).sqrt())
    }

    pub fn mean(&self) -> PhasePoint {
        PhasePoint::new(&self.m_q[..self.dim], &self.m_p[..self.dim]).expect("finite mean")
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain_err(format!("alpha must lie in (0, 1], got {alpha}"));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return domain_err(format!("time must be positive and finite, got {t}"));
    }
    Ok(())
}

/// Moments of `(q_t, p_t)` started at `x0`.
pub fn gaussian_moments(x0: &PhasePoint, t: f64, params: &ModelParams, alpha: f64) -> Result<GaussianMoments> {
    check_time(t)?;
    check_alpha(alpha)?;
    let rho = params.gamma * t;
    let s2 = params.sigma * params.sigma;
    let f1 = phi1(rho);
    let decay = (-rho).exp();
    let mut m_q = [0.0; MAX_DIM];
    let mut m_p = [0.0; MAX_DIM];
    for i in 0..x0.dim() {
        m_q[i] = x0.q()[i] + t * x0.p()[i] * f1;
        m_p[i] = x0.p()[i] * decay;
    }
    Ok(GaussianMoments {
        m_q,
        m_p,
        c_qq: s2 * t.powi(3) * phi2(rho) / 3.0,
        c_qp: s2 * t * t * f1 * f1 / 2.0,
        c_pp: s2 * t * phi1(2.0 * rho),
        det: s2 * s2 * t.powi(4) * phi_det(rho) / 12.0,
        alpha,
        dim: x0.dim(),
    })
}

/// Transition density of the reference process from `x0` to `y` over time `t`.
pub fn gaussian_density(x0: &PhasePoint, y: &PhasePoint, t: f64, params: &ModelParams, alpha: f64) -> Result<f64> {
    Ok(gaussian_log_density(x0, y, t, params, alpha)?.exp())
}

pub fn gaussian_log_density(x0: &PhasePoint, y: &PhasePoint, t: f64, params: &ModelParams, alpha: f64) -> Result<f64> {
    let m = gaussian_moments(x0, t, params, alpha)?;
    let (qq, qp, pp, det) = m.scaled_block();
    let mut log_density = 0.0;
    for i in 0..x0.dim() {
        let zq = y.q()[i] - m.m_q[i];
        let zp = y.p()[i] - m.m_p[i];
        let quad = (pp * zq * zq - 2.0 * qp * zq * zp + qq * zp * zp) / det;
        log_density += -0.5 * quad - (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
    }
    Ok(log_density)
}

/// Density of the position marginal `q_t` at `qprime`.
pub fn q_marginal_density(x0: &PhasePoint, qprime: &[f64], t: f64, params: &ModelParams, alpha: f64) -> Result<f64> {
    let m = gaussian_moments(x0, t, params, alpha)?;
    let var = m.c_qq / alpha;
    let mut log_density = 0.0;
    for (i, qp) in qprime.iter().enumerate().take(x0.dim()) {
        let z = qp - m.m_q[i];
        log_density += -0.5 * z * z / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    }
    Ok(log_density.exp())
}

/// Exact draw from the law of the reference process at time `t`.
pub fn sample_reference_exact<R: Rng + ?Sized>(
    x0: &PhasePoint,
    t: f64,
    params: &ModelParams,
    alpha: f64,
    rng: &mut R,
) -> Result<PhasePoint> {
    let m = gaussian_moments(x0, t, params, alpha)?;
    let (l11, l21, l22) = m.cholesky();
    let mut y = *x0;
    for i in 0..x0.dim() {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        y.q_mut()[i] = m.m_q[i] + l11 * z1;
        y.p_mut()[i] = m.m_p[i] + l21 * z1 + l22 * z2;
    }
    Ok(y)
}

/// Constant of the Gaussian upper bound
/// `C_{t,T} = alpha^{-d} sum_j (F_sup c_alpha (1 + sqrt(gamma_- T)) sqrt(pi t) / sigma)^j / Gamma((j+1)/2)`.
///
/// The series is summed until a term drops below `tol` times the partial sum
/// once terms are decreasing.
pub fn bound_constant(
    t: f64,
    horizon: f64,
    alpha: f64,
    f_sup: f64,
    params: &ModelParams,
    c_alpha: f64,
    tol: f64,
) -> Result<f64> {
    check_time(t)?;
    if !(t <= horizon) {
        return domain_err(format!("need 0 < t <= T, got t = {t}, T = {horizon}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain_err(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if !(tol > 0.0) {
        return domain_err(format!("tolerance must be positive, got {tol}"));
    }
    if !(f_sup >= 0.0 && c_alpha > 0.0) {
        return domain_err("need F_sup >= 0 and c_alpha > 0");
    }
    let prefactor = alpha.powi(-(params.dim as i32));
    let x = f_sup * c_alpha * (1.0 + (params.gamma_minus() * horizon).sqrt()) * (std::f64::consts::PI * t).sqrt()
        / params.sigma;
    if x == 0.0 {
        return Ok(prefactor / std::f64::consts::PI.sqrt());
    }
    let ln_x = x.ln();
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for j in 0.. {
        let jf = j as f64;
        let term = (jf * ln_x - ln_gamma((jf + 1.0) / 2.0)).exp();
        sum += term;
        if term < prev && term < tol * sum {
            break;
        }
        prev = term;
    }
    Ok(prefactor * sum)
}

/// Upper envelope of `sup_q P_{(q,p)}(tau > t)` at `|p| = p_norm`:
/// `C_{t,t} (3 alpha)^{d/2} |O| (2 pi sigma^2 t^3 Phi2)^{-d/2} exp(-3 alpha t^2 Phi1^2 |p|^2 / (8 sigma^2 t^3 Phi2))`,
/// valid once `|p| >= high_velocity_threshold`.
pub fn high_velocity_envelope(
    p_norm: f64,
    t: f64,
    alpha: f64,
    bound: f64,
    params: &ModelParams,
    domain: &PositionDomain,
) -> Result<f64> {
    check_time(t)?;
    check_alpha(alpha)?;
    let rho = params.gamma * t;
    let d = params.dim as f64;
    let s2 = params.sigma * params.sigma;
    let (f1, f2) = (phi1(rho), phi2(rho));
    let norm = (3.0 * alpha).powf(d / 2.0) * domain.volume() / (2.0 * std::f64::consts::PI * s2 * t.powi(3) * f2).powf(d / 2.0);
    let rate = 3.0 * alpha * t * t * f1 * f1 / (8.0 * s2 * t.powi(3) * f2);
    Ok(bound * norm * (-rate * p_norm * p_norm).exp())
}

/// `2 diam(O) / (t Phi1(gamma t))`.
pub fn high_velocity_threshold(t: f64, params: &ModelParams, domain: &PositionDomain) -> f64 {
    2.0 * domain.diameter() / (t * phi1(params.gamma * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn free(gamma: f64, sigma: f64) -> ModelParams {
        ModelParams::free_1d(gamma, sigma).unwrap()
    }

    #[test]
    fn moments_without_friction() {
        let m = gaussian_moments(&PhasePoint::new_1d(0.0, 1.0), 2.0, &free(0.0, 1.0), 1.0).unwrap();
        assert!((m.m_q[0] - 2.0).abs() < 1e-15);
        assert!((m.m_p[0] - 1.0).abs() < 1e-15);
        assert!((m.c_qq - 8.0 / 3.0).abs() < 1e-14);
        assert!((m.c_qp - 2.0).abs() < 1e-14);
        assert!((m.c_pp - 2.0).abs() < 1e-14);
    }

    #[test]
    fn momentum_variance_with_friction() {
        let m = gaussian_moments(&PhasePoint::new_1d(0.0, 0.0), 1.0, &free(1.0, 1.0), 1.0).unwrap();
        assert!((m.c_pp - 0.4323323584).abs() < 1e-10);
    }

    #[test]
    fn density_at_mean() {
        let p = free(0.7, 1.3);
        let x0 = PhasePoint::new_1d(0.2, -0.4);
        let (t, alpha) = (0.8, 0.6);
        let m = gaussian_moments(&x0, t, &p, alpha).unwrap();
        let det2 = p.sigma.powi(4) * t.powi(4) / (12.0 * alpha * alpha) * phi_det(p.gamma * t);
        let expect = 1.0 / (2.0 * std::f64::consts::PI * det2.sqrt());
        let got = gaussian_density(&x0, &m.mean(), t, &p, alpha).unwrap();
        assert!((got - expect).abs() / expect < 1e-13);
        let z = q_marginal_density(&x0, &m.m_q[..1], t, &p, alpha).unwrap();
        let expect_q = 1.0 / (2.0 * std::f64::consts::PI * m.c_qq / alpha).sqrt();
        assert!((z - expect_q).abs() / expect_q < 1e-13);
    }

    #[test]
    fn invalid_times_rejected() {
        let p = free(1.0, 1.0);
        let x0 = PhasePoint::new_1d(0.0, 0.0);
        assert!(gaussian_moments(&x0, 0.0, &p, 1.0).is_err());
        assert!(gaussian_density(&x0, &x0, -1.0, &p, 1.0).is_err());
        assert!(q_marginal_density(&x0, &[0.0], 0.0, &p, 1.0).is_err());
        let mut rng = RngStream::new(1, 0);
        assert!(sample_reference_exact(&x0, 0.0, &p, 1.0, &mut rng).is_err());
    }

    #[test]
    fn bound_constant_force_free() {
        let c = bound_constant(1.0, 1.0, 0.5, 0.0, &free(1.0, 1.0), 1.0, 1e-12).unwrap();
        assert!((c - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(bound_constant(1.0, 1.0, 0.5, 1.0, &free(1.0, 1.0), 1.0, 0.0).is_err());
        assert!(bound_constant(2.0, 1.0, 0.5, 1.0, &free(1.0, 1.0), 1.0, 1e-12).is_err());
    }

    #[test]
    fn bound_constant_refinement_and_monotonicity() {
        let p = free(-0.3, 0.8);
        let mut last = 0.0;
        for &f in &[0.0, 0.1, 0.5, 1.0, 2.0, 4.0] {
            for &(t, big_t) in &[(0.1, 1.0), (1.0, 1.0), (0.5, 3.0)] {
                let loose = bound_constant(t, big_t, 0.7, f, &p, 1.3, 1e-12).unwrap();
                let tight = bound_constant(t, big_t, 0.7, f, &p, 1.3, 1e-15).unwrap();
                assert!(((loose - tight) / tight).abs() < 1e-10);
            }
            let c = bound_constant(0.5, 1.0, 0.7, f, &p, 1.3, 1e-14).unwrap();
            assert!(c >= last);
            last = c;
        }
    }
}
