use super::shared::{interval, qsd_pool};
use super::{CheckReport, ReportBuilder};
use crate::config::RunConfig;
use crate::error::Result;
use crate::fleming_viot::exit_law;
use crate::rng::derive_seed;
use crate::spectral::{richardson, solve_grid, Grid};
use crate::stats::{chi_square_gof, ks_test, mutual_information, normal_quantile, permutation_test};

/// `|p| psi` on the outgoing half of boundary side `side` (0 = left end),
/// as `(|p|, value)` pairs sorted by `|p|`.
fn outgoing_profile(grid: &Grid, psi: &[f64], side: usize) -> Vec<(f64, f64)> {
    let i = if side == 0 { 0 } else { grid.n_q + 1 };
    let mut pts: Vec<(f64, f64)> = (0..grid.n_p)
        .map(|j| grid.p(j))
        .zip((0..grid.n_p).map(|j| psi[grid.index(i, j)]))
        .filter(|(p, _)| if side == 0 { *p <= 0.0 } else { *p >= 0.0 })
        .map(|(p, v)| (p.abs(), p.abs() * v.max(0.0)))
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    pts
}

/// Exact integral of the piecewise-linear interpolant over `[lo, hi]`.
fn integrate_linear(pts: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let at = |x: f64| {
        let k = pts.partition_point(|p| p.0 <= x);
        if k == 0 || k == pts.len() {
            return if k == pts.len() && x <= pts[k - 1].0 { pts[k - 1].1 } else { 0.0 };
        }
        let (a, b) = (pts[k - 1], pts[k]);
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    };
    let mut xs = vec![lo];
    xs.extend(pts.iter().map(|p| p.0).filter(|&x| x > lo && x < hi));
    xs.push(hi);
    xs.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (at(w[0]) + at(w[1]))).sum()
}

/// Per-side outgoing mass and bin probabilities on `n_bins` bins of width
/// `p_cut / n_bins`, the last bin extended to the grid cutoff.
fn exit_profile(grid: &Grid, psi: &[f64], p_cut: f64, n_bins: usize) -> [(f64, Vec<f64>); 2] {
    let w = p_cut / n_bins as f64;
    [0, 1].map(|side| {
        let pts = outgoing_profile(grid, psi, side);
        let bins: Vec<f64> = (0..n_bins)
            .map(|k| {
                let hi = if k + 1 == n_bins { grid.p_max } else { (k + 1) as f64 * w };
                integrate_linear(&pts, k as f64 * w, hi)
            })
            .collect();
        (bins.iter().sum(), bins)
    })
}

/// Exit time, exit side and exit momentum from a quasi-stationary start.
pub fn check_exit_law(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "exit_law");
    let mut rb = ReportBuilder::new("exit_law", config, seed);
    interval(config)?;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let v = &config.verify;
    let sig = v.significance;
    let traj = config.trajectory()?;
    let s = &config.spectral;

    let study = richardson(&config.grid(s.n_q >> (s.levels - 1), s.n_p >> (s.levels - 1))?, &params, s.levels)?;
    let (lambda0, lambda_err) = (study.best(), study.spread());
    // the boundary profile converges slowly; extrapolate from the main grid and its refinement
    let coarse = config.main_grid()?;
    let fine = coarse.refined(2)?;
    let (_, _, pair_fine) = solve_grid(&fine, &params)?;
    let (_, _, pair_coarse) = solve_grid(&coarse, &params)?;
    let p_cut = fine.p_max;
    let nb = v.exit_p_bins;
    let prof_fine = exit_profile(&fine, &pair_fine.psi_vec, p_cut, nb);
    let prof_coarse = exit_profile(&coarse, &pair_coarse.psi_vec, p_cut, nb);

    let pool = qsd_pool(config, derive_seed(seed, "fv"), 40)?;
    let law = exit_law(&pool.sampler(), v.samples, &traj, &params, &domain, derive_seed(seed, "exits"), p_cut, nb)?;
    let exits = law.exit_times.len();
    rb.measure("exits", exits);
    rb.measure("censored", law.censored);
    rb.measure("lambda0", lambda0);

    // (i) exponential exit time
    let ks = ks_test(&law.exit_times, |t| 1.0 - (-lambda0 * t).exp())?;
    rb.measure("ks_statistic", ks.statistic);
    rb.at_least("exit_time_ks_p_value", ks.p_value, sig);

    // (ii) independence of exit time and exit point, two tests sharing the level
    let mut sorted: Vec<f64> = law.normal_momenta.clone();
    sorted.sort_by(f64::total_cmp);
    let quartiles: Vec<f64> = (1..4).map(|k| sorted[k * sorted.len() / 4]).collect();
    let momentum_label: Vec<usize> = law.normal_momenta.iter().map(|m| quartiles.partition_point(|q| q <= m)).collect();
    let by_side = permutation_test(&law.exit_times, &law.sides, 999, derive_seed(seed, "perm-side"))?;
    let by_momentum = permutation_test(&law.exit_times, &momentum_label, 999, derive_seed(seed, "perm-momentum"))?;
    rb.at_least("time_vs_side_permutation_p_value", by_side.p_value, sig / 2.0);
    rb.at_least("time_vs_momentum_permutation_p_value", by_momentum.p_value, sig / 2.0);
    let mut t_sorted = law.exit_times.clone();
    t_sorted.sort_by(f64::total_cmp);
    let t_quart: Vec<f64> = (1..4).map(|k| t_sorted[k * t_sorted.len() / 4]).collect();
    let time_label: Vec<usize> = law.exit_times.iter().map(|t| t_quart.partition_point(|q| q <= t)).collect();
    rb.measure("mutual_information_time_side", mutual_information(&time_label, &law.sides));
    rb.measure("mutual_information_time_momentum", mutual_information(&time_label, &momentum_label));

    // (iii) exit momentum per side against |p| psi, extrapolated in the grid size
    let mut side_mass = [0.0; 2];
    for side in 0..2 {
        let fine_p: Vec<f64> = prof_fine[side].1.iter().map(|x| x / prof_fine[side].0).collect();
        let coarse_p: Vec<f64> = prof_coarse[side].1.iter().map(|x| x / prof_coarse[side].0).collect();
        let mut extrapolated: Vec<f64> = fine_p.iter().zip(&coarse_p).map(|(f, c)| (2.0 * f - c).max(0.0)).collect();
        let total: f64 = extrapolated.iter().sum();
        extrapolated.iter_mut().for_each(|x| *x /= total);
        let observed = &law.histogram.counts[side];
        let (gof, used) = chi_square_gof(observed, &extrapolated, 5.0)?;
        let (gof_fine, _) = chi_square_gof(observed, &fine_p, 5.0)?;
        let n_side: f64 = observed.iter().sum();
        let residuals: Vec<f64> = observed
            .iter()
            .zip(&extrapolated)
            .map(|(o, p)| if n_side * p >= 5.0 { (o - n_side * p) / (n_side * p).sqrt() } else { 0.0 })
            .collect();
        rb.measure(&format!("side_{side}_standardised_residuals"), residuals);
        rb.measure(&format!("side_{side}_bins_used"), used);
        rb.measure(&format!("side_{side}_p_value_unextrapolated"), gof_fine.p_value);
        rb.at_least(&format!("side_{side}_momentum_chi_square_p_value"), gof.p_value, sig / 2.0);
        side_mass[side] = 2.0 * prof_fine[side].0 - prof_coarse[side].0;
    }

    let z = normal_quantile(1.0 - sig / 2.0);
    // finite-time mass of {tau <= t}
    let t = 1.0;
    let n = (exits + law.censored) as f64;
    let frac = law.exit_times.iter().filter(|&&x| x <= t).count() as f64 / n;
    let expected = 1.0 - (-lambda0 * t).exp();
    let half = z * (frac * (1.0 - frac) / n).sqrt().hypot(t * (-lambda0 * t).exp() * lambda_err);
    rb.measure("mass_before_1", frac);
    rb.at_most("finite_time_mass_difference", (frac - expected).abs(), half);

    // side split
    let right = law.sides.iter().filter(|&&s| s == 1).count() as f64 / exits as f64;
    let expected_right = side_mass[1] / (side_mass[0] + side_mass[1]);
    rb.measure("right_fraction", right);
    rb.measure("right_fraction_spectral", expected_right);
    rb.at_most("side_split_difference", (right - expected_right).abs(), z * (right * (1.0 - right) / exits as f64).sqrt());

    // outgoing flux of the normalised density equals the decay rate
    let flux = prof_fine[0].0 + prof_fine[1].0;
    rb.info("flux_normalisation_relative_error", true, ((flux - pair_fine.lambda0) / pair_fine.lambda0).abs(), 0.0);
    Ok(rb.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_integration_is_exact() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)];
        assert!((integrate_linear(&pts, 0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((integrate_linear(&pts, 0.5, 1.5) - 1.5).abs() < 1e-15);
        assert_eq!(integrate_linear(&pts, 2.0, 3.0), 0.0);
    }
}
