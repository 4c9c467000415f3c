use super::shared::{box_mean, interval};
use super::{CheckReport, ReportBuilder};
use crate::config::RunConfig;
use crate::domain::{PhasePoint, PositionDomain};
use crate::error::Result;
use crate::gaussian::{bound_constant, gaussian_density, gaussian_moments};
use crate::histogram::PhaseHistogram;
use crate::integrator::{run_batch, Propagator};
use crate::rng::derive_seed;

/// Bins with fewer counts do not enter the comparison.
const MIN_COUNT: f64 = 30.0;
const SLACK_SIGMAS: f64 = 3.0;

/// Smallest `c` with `bound_constant(c) >= required`, by doubling and bisection.
fn minimal_c_alpha(required: f64, constant: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if constant(1e-12)? >= required {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while constant(hi)? < required {
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if constant(mid)? >= required {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Compares the absorbed transition density from the domain centre with the
/// Gaussian reference bound, bin by bin.
pub fn check_gaussian_bound(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "gaussian_bound");
    let mut rb = ReportBuilder::new("gaussian_bound", config, seed).informational();
    let (a, b) = interval(config)?;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let v = &config.verify;
    let t = v.t_compare;
    let n = v.samples;
    let x0 = PhasePoint::new_1d(0.5 * (a + b), 0.0);

    let traj = config.trajectory()?.with_t_max(t);
    let absorbed = run_batch(|_| Ok(x0), n, &Propagator::new(&traj, &params, &domain)?, seed)?;
    // same streams on an effectively unbounded interval
    let wide = PositionDomain::interval(a - 1e6, b + 1e6)?;
    let free = run_batch(|_| Ok(x0), n, &Propagator::new(&traj, &params, &wide)?, seed)?;
    let survivors: Vec<PhasePoint> = absorbed.iter().filter(|r| !r.absorbed).map(|r| r.exit_point).collect();
    let free_end: Vec<PhasePoint> = free.iter().map(|r| r.exit_point).collect();
    rb.measure("survival_fraction", survivors.len() as f64 / n as f64);

    let m = gaussian_moments(&x0, t, &params, 1.0)?;
    let p_max = 4.0 * m.c_pp.sqrt() + m.m_p[0].abs();
    let mut bins = 32;
    let (h_abs, h_free) = loop {
        let h_abs = PhaseHistogram::from_points(&survivors, (a, b), p_max, bins, bins)?;
        let h_free = h_abs.like(&free_end)?;
        let populated = h_abs.masses.iter().filter(|m| **m * survivors.len() as f64 >= MIN_COUNT).count();
        if populated >= 20 || bins <= 4 {
            break (h_abs, h_free);
        }
        rb.note(format!("only {populated} bins with at least {MIN_COUNT} counts at {bins}x{bins}; widening"));
        bins /= 2;
    };
    rb.measure("bins", bins);
    let area = h_abs.h_q() * h_abs.h_p();
    let nf = n as f64;
    // histogram masses are fractions of their own sample
    let abs_counts: Vec<f64> = h_abs.masses.iter().map(|m| (m * survivors.len() as f64).round()).collect();
    let free_counts: Vec<f64> = h_free.masses.iter().map(|m| (m * nf).round()).collect();

    // CRN: every absorbed survivor is also a free end point
    let excess = abs_counts.iter().zip(&free_counts).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
    rb.at_most("absorbed_le_free_max_excess_counts", excess, 0.0);

    let f_sup = params.force.sup_norm(&domain);
    rb.measure("f_sup", f_sup);
    let d = params.dim as i32;
    let mut c_min = Vec::new();
    let mut required_by_alpha = Vec::new();
    for &alpha in &v.alphas {
        // largest ratio of (density - slack) to the bin-averaged reference density
        let mut required: f64 = 0.0;
        for (k, &counts) in abs_counts.iter().enumerate() {
            if counts < MIN_COUNT {
                continue;
            }
            let (q0, q1, p0, p1) = h_abs.bin_edges(k);
            let reference = box_mean(
                |q, p| gaussian_density(&x0, &PhasePoint::new_1d(q, p), t, &params, alpha).unwrap_or(0.0),
                (q0, q1),
                (p0, p1),
                2,
            );
            let density = (counts - SLACK_SIGMAS * counts.sqrt()) / (nf * area);
            required = required.max(density / reference);
        }
        let constant = |c: f64| bound_constant(t, t, alpha, f_sup, &params, c, config.gaussian.tol);
        let literal = constant(config.gaussian.c_alpha)?;
        let normalised = alpha.powi(-d);
        rb.info(&format!("alpha_{alpha}_configured_constant_holds"), required <= literal, required, literal);
        if f_sup == 0.0 {
            rb.info(&format!("alpha_{alpha}_normalised_constant_holds"), required <= normalised, required, normalised);
        }
        let c = minimal_c_alpha(required, constant)?;
        let scan: Vec<(f64, bool)> =
            v.c_alpha_scan.iter().map(|&c| Ok((c, constant(c)? >= required))).collect::<Result<_>>()?;
        rb.measure(&format!("alpha_{alpha}_scan"), scan);
        rb.measure(&format!("alpha_{alpha}_required_constant"), required);
        required_by_alpha.push((alpha, required));
        c_min.push((alpha, c.is_finite().then_some(c)));
    }
    if f_sup == 0.0 {
        rb.note("F = 0: the bound constant does not depend on c_alpha; minimal c_alpha is 0 when the series constant suffices and unbounded otherwise");
    }
    let mut by_alpha = c_min.clone();
    by_alpha.sort_by(|x, y| x.0.total_cmp(&y.0));
    let key = |c: Option<f64>| c.unwrap_or(f64::INFINITY);
    let monotone = by_alpha.windows(2).all(|w| key(w[0].1) <= key(w[1].1));
    rb.info("minimal_c_alpha_nonincreasing_as_alpha_decreases", monotone, f64::from(u8::from(monotone)), 1.0);
    let reported: Vec<(f64, serde_json::Value)> =
        c_min.iter().map(|&(a, c)| (a, c.map_or_else(|| "unbounded".into(), serde_json::Value::from))).collect();
    rb.measure("minimal_c_alpha", reported);
    rb.measure("required_constant", required_by_alpha);
    Ok(rb.finish())
}
