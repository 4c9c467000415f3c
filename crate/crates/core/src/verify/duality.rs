use rand::Rng;

use super::shared::interval;
use super::{CheckReport, ReportBuilder};
use crate::config::RunConfig;
use crate::domain::PhasePoint;
use crate::error::Result;
use crate::integrator::{run_batch, Dynamics, Propagator};
use crate::rng::derive_seed;
use crate::spectral::{build_adjoint_generator, build_generator, duality_check, spectral_radius, Semigroup};
use crate::stats::{chi_square_sf, normal_quantile};

/// Kernel duality on the discrete operators over the configured refinement
/// levels, and the spectral-radius relation on the finest level.
pub fn check_duality_spectral(config: &RunConfig) -> Result<CheckReport> {
    let mut rb = ReportBuilder::new("duality_spectral", config, config.seed);
    let params = config.params()?;
    let v = &config.verify;
    let t = v.t_compare;
    let mut residuals = Vec::new();
    let mut finest = None;
    for &n in &v.duality_levels {
        let grid = config.grid(n, n)?;
        let a = build_generator(&grid, &params)?;
        let a_star = build_adjoint_generator(&grid, &params)?;
        residuals.push((n, duality_check(&a, &a_star, t)?));
        finest = Some((a, a_star));
    }
    rb.measure("residuals", &residuals);
    if let Some(&(_, last)) = residuals.last() {
        rb.at_most("finest_residual", last, v.duality_tol);
    }
    let decreasing = residuals.windows(2).all(|w| w[1].1 < w[0].1);
    rb.holds("residual_strictly_decreasing", decreasing, residuals.len() as f64, 0.0);

    if let Some((a, a_star)) = finest {
        let r_fwd = spectral_radius(&Semigroup::new(&a, t)?, 1e-13, 5000)?;
        let r_adj = spectral_radius(&Semigroup::adjoint_process(&a_star, t)?, 1e-13, 5000)?;
        let expected = r_fwd * (-(params.dim as f64) * params.gamma * t).exp();
        rb.measure("radius_forward", r_fwd);
        rb.measure("radius_adjoint", r_adj);
        rb.at_most("radius_relation_relative_error", ((r_adj - expected) / expected).abs(), v.radius_tol);
    }
    Ok(rb.finish())
}

/// Box layout of the Monte Carlo duality test: a source box and a grid of
/// target boxes covering `O x [-p_lim, p_lim]`.
struct Boxes {
    source: [f64; 4],
    targets: Vec<[f64; 4]>,
}

impl Boxes {
    fn new(a: f64, b: f64, p_lim: f64, n_q: usize, n_p: usize, source_p: f64) -> Self {
        let l = b - a;
        let source = [a + 0.4 * l, a + 0.6 * l, -0.5 * source_p, 0.5 * source_p];
        let (hq, hp) = (l / n_q as f64, 2.0 * p_lim / n_p as f64);
        let targets = (0..n_q)
            .flat_map(|i| (0..n_p).map(move |j| [a + i as f64 * hq, a + (i + 1) as f64 * hq, -p_lim + j as f64 * hp, -p_lim + (j + 1) as f64 * hp]))
            .collect();
        Self { source, targets }
    }

    fn area(r: &[f64; 4]) -> f64 {
        (r[1] - r[0]) * (r[3] - r[2])
    }

    fn contains(r: &[f64; 4], x: &PhasePoint) -> bool {
        let (q, p) = (x.q()[0], x.p()[0]);
        q >= r[0] && q < r[1] && p >= r[2] && p < r[3]
    }

    fn sample<R: Rng + ?Sized>(r: &[f64; 4], rng: &mut R) -> PhasePoint {
        PhasePoint::new_1d(r[0] + (r[1] - r[0]) * rng.random::<f64>(), r[2] + (r[3] - r[2]) * rng.random::<f64>())
    }
}

/// Box-integrated duality by simulation: forward mass from the source box
/// into each target box against `e^{d gamma t}` times the adjoint mass from
/// that target box back into the source box.
pub fn check_duality_mc(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "duality_mc");
    let mut rb = ReportBuilder::new("duality_mc", config, seed);
    let (a, b) = interval(config)?;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let v = &config.verify;
    let t = v.t_compare;
    let sigma = params.sigma;
    let boxes = Boxes::new(a, b, 3.0 * sigma * t.sqrt().max(1.0), 5, 6, sigma);
    let factor = (params.dim as f64 * params.gamma * t).exp();

    let traj = config.trajectory()?.with_t_max(t);
    let fwd_prop = Propagator::new(&traj, &params, &domain)?;
    let adj_prop = Propagator::new(&traj.with_dynamics(Dynamics::Adjoint), &params, &domain)?;
    let n_fwd = v.samples;
    let n_adj = (v.samples / 5).max(1);

    let fwd = run_batch(|r| Ok(Boxes::sample(&boxes.source, r)), n_fwd, &fwd_prop, derive_seed(seed, "forward"))?;
    let mut fwd_counts = vec![0.0; boxes.targets.len()];
    for r in fwd.iter().filter(|r| !r.absorbed) {
        if let Some(k) = boxes.targets.iter().position(|bx| Boxes::contains(bx, &r.exit_point)) {
            fwd_counts[k] += 1.0;
        }
    }
    let src_area = Boxes::area(&boxes.source);
    let mut z = Vec::new();
    let mut used = Vec::new();
    let mut excluded = 0usize;
    let (mut sum_f, mut sum_g, mut var_g) = (0.0, 0.0, 0.0);
    for (k, bx) in boxes.targets.iter().enumerate() {
        if fwd_counts[k] < 10.0 {
            excluded += 1;
            continue;
        }
        let records = run_batch(|r| Ok(Boxes::sample(bx, r)), n_adj, &adj_prop, derive_seed(seed, &format!("adjoint-{k}")))?;
        let back = records.iter().filter(|r| !r.absorbed && Boxes::contains(&boxes.source, &r.exit_point)).count() as f64;
        if back < 10.0 {
            excluded += 1;
            continue;
        }
        let (pf, pg) = (fwd_counts[k] / n_fwd as f64, back / n_adj as f64);
        let f = pf * src_area;
        let g = factor * pg * Boxes::area(bx);
        let vf = src_area.powi(2) * pf * (1.0 - pf) / n_fwd as f64;
        let vg = (factor * Boxes::area(bx)).powi(2) * pg * (1.0 - pg) / n_adj as f64;
        z.push((f - g) / (vf + vg).sqrt());
        used.push(k);
        sum_f += f;
        sum_g += g / factor;
        var_g += vg / (factor * factor);
    }
    rb.measure("bins_used", used.len());
    rb.measure("bins_excluded", excluded);
    let chi2: f64 = z.iter().map(|z| z * z).sum();
    let p_value = chi_square_sf(chi2, z.len() as f64);
    rb.measure("chi_square", chi2);
    rb.at_least("chi_square_p_value", p_value, v.significance);
    let crit = normal_quantile(1.0 - v.significance / (2.0 * z.len().max(1) as f64));
    let offending: Vec<(usize, f64)> = used.iter().zip(&z).filter(|(_, z)| z.abs() > crit).map(|(&k, &z)| (k, z)).collect();
    rb.measure("offending_bins", offending);

    // fitted ratio of summed forward and adjoint masses against e^{d gamma t}
    let p_total = sum_f / src_area;
    let var_f = src_area.powi(2) * p_total * (1.0 - p_total) / n_fwd as f64;
    let ratio = sum_f / sum_g;
    let ratio_se = ratio * (var_f / (sum_f * sum_f) + var_g / (sum_g * sum_g)).sqrt();
    rb.measure("ratio", ratio);
    rb.measure("ratio_se", ratio_se);
    rb.measure("expected_ratio", factor);
    let z_crit = normal_quantile(1.0 - v.significance / 2.0);
    rb.at_most("ratio_z_score", ((ratio - factor) / ratio_se).abs(), z_crit);
    Ok(rb.finish())
}
