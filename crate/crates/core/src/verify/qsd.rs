use super::lambda::fit_survival;
use super::shared::{evolve_survivors, interpolate, interval, qsd_pool, solve_main};
use super::{CheckReport, ReportBuilder};
use crate::config::RunConfig;
use crate::domain::PhasePoint;
use crate::error::{Error, Result};
use crate::fleming_viot::{conditioned_states, QsdSampler};
use crate::histogram::{tv_distance, PhaseHistogram};
use crate::integrator::{run_batch, Propagator};
use crate::rng::{derive_seed, RngStream};
use crate::spectral::richardson;

fn draw(sampler: &QsdSampler, n: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    (0..n as u64).map(|i| sampler.sample(&mut RngStream::new(seed, i))).collect()
}

/// Mean TV between the histogram `reference` (built from `reference.samples`
/// draws) and fresh samples of size `m` from the same law: the finite-sample
/// floor of a TV comparison.
fn tv_noise(sampler: &QsdSampler, reference: &PhaseHistogram, m: usize, seed: u64, replicates: u64) -> Result<f64> {
    let mut acc = 0.0;
    for r in 0..replicates {
        let h = reference.like(&draw(sampler, m, derive_seed(seed, &format!("noise-{r}")))?)?;
        acc += tv_distance(reference, &h)?;
    }
    Ok(acc / replicates as f64)
}

/// Conditioned evolution from the spectral quasi-stationary density stays put;
/// from a uniform start it does not.
pub fn check_qsd_fixed_point(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "qsd_fixed_point");
    let mut rb = ReportBuilder::new("qsd_fixed_point", config, seed);
    let (a, b) = interval(config)?;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let traj = config.trajectory()?;
    let v = &config.verify;
    let sp = solve_main(config)?;
    let psi = QsdSampler::from_grid(&sp.grid, &sp.pair.psi_vec)?;
    let uniform = QsdSampler::Uniform { domain: domain.clone(), p_max: sp.grid.p_max };
    let bins = v.histogram_bins;
    let n = v.samples;

    let mut run = |label: &str, theta: &QsdSampler, times: &[f64], expect_stationary: bool| -> Result<()> {
        let reference = PhaseHistogram::from_points(&draw(theta, n, derive_seed(seed, &format!("{label}-ref")))?, (a, b), sp.grid.p_max, bins, bins)?;
        for &t in times {
            let states = conditioned_states(theta, t, n, &traj, &params, &domain, derive_seed(seed, &format!("{label}-{t}")))?;
            let tv = tv_distance(&reference, &reference.like(&states)?)?;
            let noise = tv_noise(theta, &reference, states.len(), derive_seed(seed, &format!("{label}-noise-{t}")), 3)?;
            let budget = noise + v.tv_bias_budget;
            rb.measure(&format!("{label}_t{t}_survivors"), states.len());
            rb.measure(&format!("{label}_t{t}_noise"), noise);
            if expect_stationary {
                rb.at_most(&format!("{label}_t{t}_tv"), tv, budget);
            } else {
                // negative control: the test must detect the wrong input
                rb.at_least(&format!("{label}_t{t}_tv_negative_control"), tv, budget);
            }
        }
        Ok(())
    };
    run("psi", &psi, &v.qsd_times, true)?;
    run("uniform", &uniform, &v.qsd_times[..1], false)?;

    // decay from the spectral law against the extrapolated eigenvalue
    let s = &config.spectral;
    let study = richardson(&config.grid(s.n_q >> (s.levels - 1), s.n_p >> (s.levels - 1))?, &params, s.levels)?;
    let records = run_batch(|r| psi.sample(r), n, &Propagator::new(&traj, &params, &domain)?, derive_seed(seed, "slope"))?;
    let fit = fit_survival(&records, traj.t_max, 20)?;
    rb.measure("slope_fit", fit);
    rb.measure("lambda0_spectral", study.best());
    let half = (0.5 * (fit.ci.1 - fit.ci.0)).hypot(study.spread());
    rb.at_most("slope_vs_spectral_difference", (fit.lambda0 - study.best()).abs(), half);
    Ok(rb.finish())
}

/// `int phi d theta` for the three initial laws of the convergence check.
fn phi_mass(theta: &QsdSampler, grid: &crate::spectral::Grid, phi: &[f64]) -> Result<f64> {
    match theta {
        QsdSampler::Point(x) => Ok(interpolate(grid, phi, x.q()[0], x.p()[0])),
        QsdSampler::Uniform { p_max, .. } => {
            let (mut acc, mut w) = (0.0, 0.0);
            for k in 0..grid.len() {
                let (_, j) = grid.coords(k);
                if grid.p(j).abs() <= *p_max {
                    acc += phi[k] * grid.weight(k);
                    w += grid.weight(k);
                }
            }
            Ok(acc / w)
        }
        _ => Err(Error::Unsupported("phi mass of this initial law".into())),
    }
}

/// TV distance to the quasi-stationary law decays in time for each initial law;
/// for the point masses it is ordered by `1 / int phi d theta`. Trajectories
/// share random numbers.
pub fn check_tv_convergence(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "tv_convergence");
    let mut rb = ReportBuilder::new("tv_convergence", config, seed);
    let (a, b) = interval(config)?;
    let l = b - a;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let traj = config.trajectory()?;
    let v = &config.verify;
    let sigma = params.sigma;
    let sp = solve_main(config)?;
    let pool = qsd_pool(config, derive_seed(seed, "fv"), 20)?;
    let pool_sampler = pool.sampler();
    let bins = v.histogram_bins;
    let mu = PhaseHistogram::from_points(&pool.points, (a, b), sp.grid.p_max, bins, bins)?;

    // point masses moving toward the exit carry less phi mass; the uniform law
    // only has to decay, its smooth profile starts close to the limit
    let laws = [
        ("centre", QsdSampler::Point(PhasePoint::new_1d(a + 0.5 * l, 0.0)), true),
        ("off_centre", QsdSampler::Point(PhasePoint::new_1d(a + 0.7 * l, 0.25 * sigma)), true),
        ("near_exit", QsdSampler::Point(PhasePoint::new_1d(a + 0.85 * l, 0.5 * sigma)), true),
        ("uniform", QsdSampler::Uniform { domain: domain.clone(), p_max: sigma }, false),
    ];
    let times = [0.25, 0.5, 1.0, 2.0, 4.0];
    let ordering_time = 1.0;
    let mut summary = Vec::new();
    for (name, theta, ordered) in &laws {
        let mut states = draw(theta, v.samples, derive_seed(seed, "start"))?;
        let mut now = 0.0;
        let mut curve = Vec::new();
        for (k, &t) in times.iter().enumerate() {
            // the conditioned law at t from the survivors at the previous time (Markov property)
            states = evolve_survivors(&states, t - now, &traj, &params, &domain, derive_seed(seed, &format!("leg-{k}")))?;
            now = t;
            if states.is_empty() {
                return Err(Error::Starvation { survivors: 0, samples: v.samples, time: t });
            }
            let tv = tv_distance(&mu, &mu.like(&states)?)?;
            let noise = tv_noise(&pool_sampler, &mu, states.len(), derive_seed(seed, &format!("noise-{name}-{k}")), 3)?;
            curve.push((t, tv, noise, states.len()));
        }
        let decays = curve.windows(2).all(|w| w[1].1 <= w[0].1 + 2.0 * w[1].2.max(w[0].2));
        rb.holds(&format!("{name}_decays_within_noise"), decays, curve.len() as f64, 0.0);
        rb.at_most(&format!("{name}_last_below_first"), curve.last().map_or(1.0, |c| c.1), curve[0].1);
        let phi = phi_mass(theta, &sp.grid, &sp.pair.phi_vec)?;
        let tv_at = curve.iter().find(|c| c.0 == ordering_time).map_or(f64::NAN, |c| c.1);
        rb.measure(&format!("{name}_curve"), &curve);
        rb.measure(&format!("{name}_phi_mass"), phi);
        if *ordered {
            summary.push((phi, tv_at));
        }
        rb.measure(&format!("{name}_tv_at_ordering_time"), tv_at);
    }
    // larger 1 / int phi d theta must come with larger TV at the ordering time
    let mut by_prefactor = summary.clone();
    by_prefactor.sort_by(|x, y| y.0.total_cmp(&x.0));
    let ordered = by_prefactor.windows(2).all(|w| w[1].1 >= w[0].1);
    rb.measure("ordering_time", ordering_time);
    rb.measure("phi_mass_and_tv", &summary);
    rb.holds("tv_ordering_follows_inverse_phi_mass", ordered, summary.len() as f64, 0.0);
    Ok(rb.finish())
}
