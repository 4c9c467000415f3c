mod common;

use kinetic_qsd::domain::PhasePoint;
use kinetic_qsd::gaussian::{gaussian_density, gaussian_log_density, gaussian_moments, q_marginal_density, sample_reference_exact};
use kinetic_qsd::model::ModelParams;
use kinetic_qsd::rng::RngStream;
use kinetic_qsd::special::phi1;
use kinetic_qsd::stats::{ks_test, normal_cdf};
use proptest::prelude::*;

fn cases() -> Vec<(f64, f64, f64)> {
    // (gamma, sigma, t)
    vec![(1.0, 1.0, 0.5), (0.0, 1.0, 0.2), (-0.2, 0.7, 1.0), (3.0, 1.5, 0.05)]
}

#[test]
fn density_integrates_to_one() {
    let x0 = PhasePoint::new_1d(0.3, -0.4);
    for (gamma, sigma, t) in cases() {
        let params = ModelParams::free_1d(gamma, sigma).unwrap();
        let m = gaussian_moments(&x0, t, &params, 0.7).unwrap();
        let (qq, qp, _, det) = m.scaled_block();
        // momentum integral centred on the conditional mean given q
        let cond_sd = (det / qq).sqrt();
        let total = common::gauss_legendre(
            |q| {
                let centre = m.m_p[0] + qp / qq * (q - m.m_q[0]);
                common::gauss_legendre(
                    |p| gaussian_density(&x0, &PhasePoint::new_1d(q, p), t, &params, 0.7).unwrap(),
                    centre - 12.0 * cond_sd,
                    centre + 12.0 * cond_sd,
                    24,
                )
            },
            m.m_q[0] - 12.0 * qq.sqrt(),
            m.m_q[0] + 12.0 * qq.sqrt(),
            24,
        );
        assert!((total - 1.0).abs() < 1e-6, "gamma={gamma} t={t}: {total}");
    }
}

/// `int_O int_O int_R q_marginal(q'; (q, p)) dp dq dq' = |O|^2 / (t Phi1(gamma t))`.
#[test]
fn position_marginal_integrates_over_momentum() {
    let (a, b) = (0.0, 1.0);
    for (gamma, sigma, t) in cases() {
        let params = ModelParams::free_1d(gamma, sigma).unwrap();
        let reach = t * phi1(gamma * t);
        let spread = gaussian_moments(&PhasePoint::new_1d(0.0, 0.0), t, &params, 1.0).unwrap().c_qq.sqrt() / reach;
        let inner = |q: f64, qp: f64| {
            let centre = (qp - q) / reach;
            common::gauss_legendre(
                |p| q_marginal_density(&PhasePoint::new_1d(q, p), &[qp], t, &params, 1.0).unwrap(),
                centre - 14.0 * spread,
                centre + 14.0 * spread,
                64,
            )
        };
        let total = common::gauss_legendre(|q| common::gauss_legendre(|qp| inner(q, qp), a, b, 2), a, b, 2);
        let expected = (b - a) * (b - a) / reach;
        assert!(common::rel_err(total, expected) < 1e-6, "gamma={gamma}: {total} vs {expected}");
    }
}

#[test]
fn exact_sampler_matches_density() {
    let x0 = PhasePoint::new_1d(0.1, 0.8);
    let n = 100_000u64;
    for (gamma, sigma, t) in cases() {
        let params = ModelParams::free_1d(gamma, sigma).unwrap();
        let alpha = 0.6;
        let m = gaussian_moments(&x0, t, &params, alpha).unwrap();
        let (qq, _, pp, det) = m.scaled_block();
        let ys: Vec<PhasePoint> = (0..n).map(|i| sample_reference_exact(&x0, t, &params, alpha, &mut RngStream::new(17, i)).unwrap()).collect();
        let qs: Vec<f64> = ys.iter().map(|y| y.q()[0]).collect();
        let ps: Vec<f64> = ys.iter().map(|y| y.p()[0]).collect();
        let ks_q = ks_test(&qs, |x| normal_cdf((x - m.m_q[0]) / qq.sqrt())).unwrap();
        let ks_p = ks_test(&ps, |x| normal_cdf((x - m.m_p[0]) / pp.sqrt())).unwrap();
        // the quadratic form read off the density is chi-square with 2 degrees of freedom
        let peak = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        let forms: Vec<f64> = ys.iter().map(|y| -2.0 * (gaussian_log_density(&x0, y, t, &params, alpha).unwrap() - peak)).collect();
        let ks_form = ks_test(&forms, |x| 1.0 - (-0.5 * x.max(0.0)).exp()).unwrap();
        for (label, ks) in [("q", ks_q), ("p", ks_p), ("form", ks_form)] {
            assert!(ks.p_value > 1e-3, "gamma={gamma} {label}: p = {}", ks.p_value);
        }
    }
}

proptest! {
    #[test]
    fn covariance_is_positive_definite(gamma in -3.0f64..3.0, sigma in 0.1f64..3.0, t in 0.001f64..5.0, alpha in 0.05f64..1.0) {
        let params = ModelParams::free_1d(gamma, sigma).unwrap();
        let m = gaussian_moments(&PhasePoint::new_1d(0.0, 1.0), t, &params, alpha).unwrap();
        prop_assert!(m.c_qq > 0.0 && m.c_pp > 0.0 && m.det > 0.0);
        prop_assert!(m.c_qp * m.c_qp < m.c_qq * m.c_pp);
        let (l11, l21, l22) = m.cholesky();
        let (qq, qp, pp, _) = m.scaled_block();
        prop_assert!(common::rel_err(l11 * l11, qq) < 1e-12);
        prop_assert!(common::rel_err(l11 * l21, qp) < 1e-12);
        prop_assert!(common::rel_err(l21 * l21 + l22 * l22, pp) < 1e-8);
    }
}
