use super::shared::qsd_pool;
use super::{CheckReport, ReportBuilder};
use crate::config::RunConfig;
use crate::error::Result;
use crate::fleming_viot::{select_window_start, survival_slope, Lambda0Fit};
use crate::integrator::{run_batch, survival_curve, AbsorptionRecord, Propagator};
use crate::rng::derive_seed;
use crate::spectral::richardson;

/// Observation times for a survival fit: a uniform grid up to the time at
/// which about `tail` trajectories remain.
pub(crate) fn fit_times(records: &[AbsorptionRecord], t_max: f64, tail: usize) -> Vec<f64> {
    let mut exits: Vec<f64> = records.iter().filter(|r| r.absorbed).map(|r| r.exit_time).collect();
    exits.sort_by(f64::total_cmp);
    let cut = records.len().saturating_sub(tail);
    let t_end = exits.get(cut.min(exits.len().saturating_sub(1))).copied().unwrap_or(t_max).min(t_max);
    (0..=40).map(|k| t_end * k as f64 / 40.0).collect()
}

pub(crate) fn fit_survival(records: &[AbsorptionRecord], t_max: f64, batches: usize) -> Result<Lambda0Fit> {
    let times = fit_times(records, t_max, 200);
    let t_end = *times.last().expect("nonempty times");
    let curve = survival_curve(records, &times);
    let candidates: Vec<f64> = [0.0, 0.1, 0.2, 0.3].iter().map(|f| f * t_end).collect();
    let start = select_window_start(&curve, &candidates)?;
    survival_slope(records, &times, start, batches)
}

/// Spectral (Richardson), survival-slope and branching-rate estimates of the
/// decay rate, compared pairwise within combined 95% half-widths.
pub fn check_lambda0_agreement(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "lambda0");
    let mut rb = ReportBuilder::new("lambda0_agreement", config, seed);
    let params = config.params()?;
    let domain = config.position_domain()?;
    let s = &config.spectral;
    let base = config.grid(s.n_q >> (s.levels - 1), s.n_p >> (s.levels - 1))?;
    let study = richardson(&base, &params, s.levels)?;
    let spectral = (study.best(), study.spread());
    rb.measure("spectral_study", &study);

    let pool = qsd_pool(config, derive_seed(seed, "fv"), 1)?;
    let fv = (pool.rate, pool.rate_half_width);
    rb.measure("fv_pool", &pool);

    let traj = config.trajectory()?;
    let sampler = pool.sampler();
    let records = run_batch(|r| sampler.sample(r), config.verify.samples, &Propagator::new(&traj, &params, &domain)?, derive_seed(seed, "slope"))?;
    let fit = fit_survival(&records, traj.t_max, 20)?;
    let slope = (fit.lambda0, 0.5 * (fit.ci.1 - fit.ci.0));
    rb.measure("slope_fit", fit);
    rb.at_least("slope_r2", fit.r2, 0.99);

    rb.measure("spectral", spectral);
    rb.measure("survival_slope", slope);
    rb.measure("fv_branching", fv);
    for (name, x, y) in [("spectral_vs_slope", spectral, slope), ("spectral_vs_fv", spectral, fv), ("slope_vs_fv", slope, fv)] {
        let combined = x.1.hypot(y.1);
        rb.at_most(&format!("{name}_difference"), (x.0 - y.0).abs(), combined);
    }
    Ok(rb.finish())
}
