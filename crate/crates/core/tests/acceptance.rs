//! Acceptance suite: one line per criterion, tolerances pinned below.
//!
//! Exits 0 even when a criterion fails so that the workspace test run reports
//! the full table; set `ACCEPTANCE_STRICT=1` to turn failures into a nonzero
//! exit status.

mod common;

use std::time::Instant;

use kinetic_qsd::domain::PhasePoint;
use kinetic_qsd::gaussian::{gaussian_density, gaussian_log_density, gaussian_moments, q_marginal_density, sample_reference_exact};
use kinetic_qsd::model::ModelParams;
use kinetic_qsd::rng::RngStream;
use kinetic_qsd::spectral::{overdamped_eigen, richardson, solve_grid, Grid};
use kinetic_qsd::special::{closed_form, phi1, phi2, phi_det, series, SERIES_THRESHOLD};
use kinetic_qsd::stats::{ks_test, normal_cdf};
use kinetic_qsd::verify::{
    check_duality_mc, check_duality_spectral, check_exit_law, check_gaussian_bound, check_lambda0_agreement, check_longtime,
    check_qsd_fixed_point, check_tv_convergence,
};
use kinetic_qsd::{CheckReport, ForceField, Reference, Status};

const SPECIAL_REL_TOL: f64 = 1e-10;
const DET_REL_TOL: f64 = 1e-12;
const KS_LEVEL: f64 = 1e-3;
const GAUSSIAN_SAMPLES: u64 = 100_000;
const QUADRATURE_TOL: f64 = 1e-6;
const OVERDAMPED_TOL: f64 = 0.01;
const OVERDAMPED_RATIO: (f64, f64) = (3.5, 4.5);
const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
const RICHARDSON_STABILITY: f64 = 0.02;
const CUTOFF_STABILITY: f64 = 0.02;

struct Outcome {
    passed: bool,
    detail: String,
    /// Time charged against the budget when it differs from the wall time.
    timed: Option<f64>,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into(), timed: None }
}

/// Passes when no report has a non-informational failure; lists failures otherwise.
fn from_reports(reports: &[CheckReport], detail: String) -> Outcome {
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failures().into_iter().map(move |f| format!("{}/{}", r.name, f)))
        .collect();
    if failed.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; failed: {}", failed.join(", ")))
    }
}

fn num(r: &CheckReport, key: &str) -> f64 {
    r.value(key).and_then(|v| v.as_f64()).unwrap_or(f64::NAN)
}

fn assertion(r: &CheckReport, name: &str) -> f64 {
    r.assertion(name).map_or(f64::NAN, |a| a.measured)
}

fn special_functions() -> Outcome {
    // oracle tables are built first; only the f64 suite counts against the budget
    let rhos: Vec<f64> = (0..=2000).map(|k| -10.0 + 0.01 * k as f64).collect();
    let oracle: Vec<[f64; 3]> = rhos.iter().map(|&r| [common::phi1(r), common::phi2(r), common::phi_det(r)]).collect();
    let cases: Vec<(f64, f64)> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().flat_map(|&g| [0.01, 0.1, 1.0, 10.0].map(|t| (g, t))).collect();
    let det_oracle: Vec<f64> = cases.iter().map(|&(g, t)| common::moment_det(g, 1.0, t)).collect();

    let start = Instant::now();
    let mut worst = 0.0f64;
    for (&rho, exact) in rhos.iter().zip(&oracle) {
        worst = worst
            .max(common::rel_err(phi1(rho), exact[0]))
            .max(common::rel_err(phi2(rho), exact[1]))
            .max(common::rel_err(phi_det(rho), exact[2]));
    }
    let mut branch = 0.0f64;
    for rho in [SERIES_THRESHOLD, -SERIES_THRESHOLD] {
        branch = branch
            .max(common::rel_err(series::phi1(rho), closed_form::phi1(rho)))
            .max(common::rel_err(series::phi2(rho), closed_form::phi2(rho)))
            .max(common::rel_err(series::phi_det(rho), closed_form::phi_det(rho)));
    }
    let mut det = 0.0f64;
    let x0 = PhasePoint::new_1d(0.0, 0.0);
    for (&(gamma, t), exact) in cases.iter().zip(&det_oracle) {
        let params = ModelParams::free_1d(gamma, 1.0).unwrap();
        let m = gaussian_moments(&x0, t, &params, 1.0).unwrap();
        det = det.max(common::rel_err(m.det, *exact));
    }
    let suite_s = start.elapsed().as_secs_f64();
    Outcome {
        passed: worst < SPECIAL_REL_TOL && branch < SPECIAL_REL_TOL && det < DET_REL_TOL,
        detail: format!("max rel err vs 320-bit oracle {worst:.1e}, branch gap {branch:.1e}, determinant {det:.1e}"),
        timed: Some(suite_s),
    }
}

fn gaussian_law() -> Outcome {
    let params = ModelParams::free_1d(1.0, 1.0).unwrap();
    let (t, alpha) = (0.5, 0.5);
    let x0 = PhasePoint::new_1d(0.2, 0.7);
    let m = gaussian_moments(&x0, t, &params, alpha).unwrap();
    let (qq, qp, pp, det) = m.scaled_block();
    let ys: Vec<PhasePoint> = (0..GAUSSIAN_SAMPLES).map(|i| sample_reference_exact(&x0, t, &params, alpha, &mut RngStream::new(2024, i)).unwrap()).collect();
    let qs: Vec<f64> = ys.iter().map(|y| y.q()[0]).collect();
    let ps: Vec<f64> = ys.iter().map(|y| y.p()[0]).collect();
    let peak = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
    let forms: Vec<f64> = ys.iter().map(|y| -2.0 * (gaussian_log_density(&x0, y, t, &params, alpha).unwrap() - peak)).collect();
    let ks = [
        ks_test(&qs, |x| normal_cdf((x - m.m_q[0]) / qq.sqrt())).unwrap().p_value,
        ks_test(&ps, |x| normal_cdf((x - m.m_p[0]) / pp.sqrt())).unwrap().p_value,
        ks_test(&forms, |x| 1.0 - (-0.5 * x.max(0.0)).exp()).unwrap().p_value,
    ];
    let cond_sd = (det / qq).sqrt();
    let total = common::gauss_legendre(
        |q| {
            let centre = m.m_p[0] + qp / qq * (q - m.m_q[0]);
            common::gauss_legendre(|p| gaussian_density(&x0, &PhasePoint::new_1d(q, p), t, &params, alpha).unwrap(), centre - 12.0 * cond_sd, centre + 12.0 * cond_sd, 24)
        },
        m.m_q[0] - 12.0 * qq.sqrt(),
        m.m_q[0] + 12.0 * qq.sqrt(),
        24,
    );
    // double integral over O x O of the position marginal, momentum integrated out
    let reach = t * phi1(params.gamma * t);
    let spread = gaussian_moments(&x0, t, &params, 1.0).unwrap().c_qq.sqrt() / reach;
    let marginal = common::gauss_legendre(
        |q| {
            common::gauss_legendre(
                |q2| {
                    let centre = (q2 - q) / reach;
                    common::gauss_legendre(|p| q_marginal_density(&PhasePoint::new_1d(q, p), &[q2], t, &params, 1.0).unwrap(), centre - 14.0 * spread, centre + 14.0 * spread, 64)
                },
                0.0,
                1.0,
                2,
            )
        },
        0.0,
        1.0,
        2,
    );
    let marginal_err = common::rel_err(marginal, 1.0 / reach);
    let ks_min = ks.iter().copied().fold(1.0, f64::min);
    outcome(
        ks_min > KS_LEVEL && (total - 1.0).abs() < QUADRATURE_TOL && marginal_err < QUADRATURE_TOL,
        format!("KS p-values (q, p, quadratic form) {:.3} {:.3} {:.3}; mass {total:.9}; marginal identity rel err {marginal_err:.1e}", ks[0], ks[1], ks[2]),
    )
}

fn overdamped() -> Outcome {
    let pi2 = std::f64::consts::PI.powi(2);
    let eig = |n| overdamped_eigen(0.0, 1.0, n, 1.0, &ForceField::Zero).map(|e| e.lambda_bar);
    match (eig(128), eig(256)) {
        (Ok(coarse), Ok(fine)) => {
            let rel = (fine - pi2).abs() / pi2;
            let ratio = (coarse - pi2).abs() / (fine - pi2).abs();
            outcome(
                rel < OVERDAMPED_TOL && (OVERDAMPED_RATIO.0..OVERDAMPED_RATIO.1).contains(&ratio),
                format!("lambda(256) = {fine:.6} (rel err {rel:.1e}), error ratio 128/256 = {ratio:.3}"),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e.to_string()),
    }
}

fn kinetic_eigenpair() -> Outcome {
    let c = Reference::R1.config();
    let params = c.params().unwrap();
    let grid = c.main_grid().unwrap();
    let (a, a_star, pair) = solve_grid(&grid, &params).unwrap();
    let mut interior_positive = true;
    let mut masks_zero = true;
    for k in 0..grid.len() {
        let (i, j) = grid.coords(k);
        let interior = !grid.is_boundary_column(i) && j > 0 && j + 1 < grid.n_p;
        if interior && !(pair.phi_vec[k] > 0.0 && pair.psi_vec[k] > 0.0) {
            interior_positive = false;
        }
        if (!a.kinds[k].is_free() && pair.phi_vec[k] != 0.0) || (!a_star.kinds[k].is_free() && pair.psi_vec[k] != 0.0) {
            masks_zero = false;
        }
    }
    let residual = pair.residual_phi.max(pair.residual_psi);
    let s = &c.spectral;
    let study = richardson(&c.grid(s.n_q >> (s.levels - 1), s.n_p >> (s.levels - 1)).unwrap(), &params, s.levels).unwrap();
    let stability = study.spread() / study.best();
    let wide = Grid::new(grid.a, grid.b, 2.0 * grid.p_max, grid.n_q, 2 * grid.n_p - 1).unwrap();
    let (_, _, wide_pair) = solve_grid(&wide, &params).unwrap();
    let cutoff = (wide_pair.lambda0 - pair.lambda0).abs() / pair.lambda0;
    outcome(
        pair.lambda0 > 0.0 && interior_positive && masks_zero && residual <= EIGEN_RESIDUAL_TOL && stability <= RICHARDSON_STABILITY && cutoff <= CUTOFF_STABILITY,
        format!(
            "lambda0(128) = {:.5}, Richardson {:.5} (stability {stability:.1e}), residual {residual:.1e}, p_max doubling {cutoff:.1e}, interior positive {interior_positive}, masks zero {masks_zero}",
            pair.lambda0,
            study.best()
        ),
    )
}

fn duality() -> Outcome {
    let spectral = check_duality_spectral(&Reference::R1.config()).unwrap();
    let mc = check_duality_mc(&Reference::R2.config()).unwrap();
    let residuals = spectral.value("residuals").map(|v| v.to_string()).unwrap_or_default();
    let detail = format!(
        "R1 residuals {residuals}, radius rel err {:.1e}; R2 Monte Carlo chi-square p {:.3}",
        assertion(&spectral, "radius_relation_relative_error"),
        assertion(&mc, "chi_square_p_value")
    );
    from_reports(&[spectral, mc], detail)
}

fn lambda_agreement() -> Outcome {
    let reports: Vec<CheckReport> = [Reference::R1, Reference::R2].iter().map(|r| check_lambda0_agreement(&r.config()).unwrap()).collect();
    let detail = reports
        .iter()
        .zip(["R1", "R2"])
        .map(|(r, name)| {
            let pick = |k: &str| r.value(k).and_then(|v| v[0].as_f64()).unwrap_or(f64::NAN);
            format!("{name}: spectral {:.4}, slope {:.4} (R2 {:.5}), FV {:.4}", pick("spectral"), pick("survival_slope"), assertion(r, "slope_r2"), pick("fv_branching"))
        })
        .collect::<Vec<_>>()
        .join("; ");
    from_reports(&reports, detail)
}

fn qsd_fixed_point() -> Outcome {
    let r = check_qsd_fixed_point(&Reference::R1.config()).unwrap();
    let detail = format!(
        "TV at 0.2 {:.4}, at 1.0 {:.4}, uniform control {:.4}",
        assertion(&r, "psi_t0.2_tv"),
        assertion(&r, "psi_t1_tv"),
        assertion(&r, "uniform_t0.2_tv_negative_control")
    );
    from_reports(&[r], detail)
}

fn exit() -> Outcome {
    let r = check_exit_law(&Reference::R1.config()).unwrap();
    let detail = format!(
        "KS p {:.3}, permutation p {:.3}/{:.3}, momentum chi-square p {:.1e}/{:.1e}, mass before 1 {:.4}",
        assertion(&r, "exit_time_ks_p_value"),
        assertion(&r, "time_vs_side_permutation_p_value"),
        assertion(&r, "time_vs_momentum_permutation_p_value"),
        assertion(&r, "side_0_momentum_chi_square_p_value"),
        assertion(&r, "side_1_momentum_chi_square_p_value"),
        num(&r, "mass_before_1")
    );
    from_reports(&[r], detail)
}

fn longtime() -> Outcome {
    let r = check_longtime(&Reference::R1.config()).unwrap();
    let alpha = r.value("gap").and_then(|g| g["alpha_star"].as_f64()).unwrap_or(f64::NAN);
    let detail = format!(
        "alpha* {alpha:.4}, decay exponents one {:.3} random {:.3} orthogonal {:.3} (need >= {:.3}), survival constant {:.4}",
        num(&r, "one_decay_exponent"),
        num(&r, "random_a_decay_exponent"),
        num(&r, "orthogonal_decay_exponent"),
        0.9 * alpha,
        num(&r, "survival_constant")
    );
    from_reports(&[r], detail)
}

fn tv() -> Outcome {
    let r = check_tv_convergence(&Reference::R1.config()).unwrap();
    let detail = format!(
        "TV at t = 1: centre {:.3}, off centre {:.3}, near exit {:.3}, uniform (decay only) {:.3}",
        num(&r, "centre_tv_at_ordering_time"),
        num(&r, "off_centre_tv_at_ordering_time"),
        num(&r, "near_exit_tv_at_ordering_time"),
        num(&r, "uniform_tv_at_ordering_time")
    );
    from_reports(&[r], detail)
}

fn bound() -> Outcome {
    let free = check_gaussian_bound(&Reference::R1.config()).unwrap();
    let forced = check_gaussian_bound(&Reference::R3.config()).unwrap();
    let held = |r: &CheckReport, suffix: &str| {
        r.assertions.iter().filter(|a| a.name.ends_with(suffix)).map(|a| if a.passed { "yes" } else { "no" }).collect::<Vec<_>>().join("/")
    };
    let minimal = forced.value("minimal_c_alpha").map(|v| v.to_string()).unwrap_or_default();
    let reported = free.status == Status::Informational && forced.status == Status::Informational && forced.value("minimal_c_alpha").is_some();
    let detail = format!(
        "informational; F=0 configured constant holds {} and alpha^-d constant holds {}; R3 minimal c_alpha per alpha {minimal}",
        held(&free, "configured_constant_holds"),
        held(&free, "normalised_constant_holds")
    );
    let mut out = from_reports(&[free, forced], detail);
    out.passed &= reported;
    out
}

/// Name, runtime budget in seconds, runner.
type Criterion = (&'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("special functions", 1.0, special_functions),
        ("Gaussian law", 30.0, gaussian_law),
        ("overdamped spectral oracle", 10.0, overdamped),
        ("kinetic eigenpair (R1)", 120.0, kinetic_eigenpair),
        ("duality", 300.0, duality),
        ("decay-rate agreement (R1, R2)", 600.0, lambda_agreement),
        ("quasi-stationary fixed point", 300.0, qsd_fixed_point),
        ("exit law", 600.0, exit),
        ("long-time asymptotics", 300.0, longtime),
        ("TV convergence", 600.0, tv),
        ("Gaussian upper bound", 600.0, bound),
    ];
    let mut failures = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut out = run();
        let elapsed = out.timed.unwrap_or_else(|| start.elapsed().as_secs_f64());
        if elapsed > *budget {
            out.passed = false;
            out.detail.push_str(&format!("; over the {budget} s budget"));
        }
        failures += usize::from(!out.passed);
        println!("[{}] {:>2} {name}: {} ({elapsed:.1} s)", if out.passed { "PASS" } else { "FAIL" }, k + 1, out.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
