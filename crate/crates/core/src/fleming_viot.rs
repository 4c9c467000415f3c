//! Fleming-Viot particle estimators of the quasi-stationary law, the decay
//! rate and the exit law.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{BoundaryClass, PhasePoint, PositionDomain};
use crate::error::{domain_err, Error, Result};
use crate::histogram::PhaseHistogram;
use crate::integrator::{run_batch, AbsorptionRecord, Propagator, TrajectoryConfig};
use crate::model::ModelParams;
use crate::rng::{RngStream, SELECTOR_STREAM};
use crate::spectral::Grid;
use crate::stats::{batch_means_ci, t_quantile, weighted_line_fit};

/// Interacting particle system: absorbed particles restart from a uniformly
/// chosen survivor. Particle `i` owns stream `(seed, i)`; survivor draws use a
/// separate stream.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub particles: Vec<PhasePoint>,
    pub time: f64,
    /// Absorption (= resampling) events per step, with the step length.
    pub resample_log: Vec<(f64, u32)>,
    streams: Vec<RngStream>,
    selector: RngStream,
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<PhasePoint>, domain: &PositionDomain, seed: u64) -> Result<Self> {
        if particles.len() < 2 {
            return domain_err("a Fleming-Viot ensemble needs at least two particles");
        }
        if let Some(x) = particles.iter().find(|x| !domain.contains(x.q())) {
            return domain_err(format!("particle at {:?} is outside the domain", x.q()));
        }
        let streams = (0..particles.len() as u64).map(|i| RngStream::new(seed, i)).collect();
        Ok(Self { particles, time: 0.0, resample_log: Vec::new(), streams, selector: RngStream::new(seed, SELECTOR_STREAM) })
    }

    /// Ensemble of `n` particles drawn from `sampler`, particle `i` using its own stream.
    pub fn from_sampler(sampler: &QsdSampler, n: usize, domain: &PositionDomain, seed: u64) -> Result<Self> {
        let particles = (0..n as u64).map(|i| sampler.sample(&mut RngStream::new(seed, i))).collect::<Result<_>>()?;
        // the particle streams restart from their origin; the offset keeps the
        // initial draws independent of the dynamics
        Self::new(particles, domain, seed.wrapping_add(1))
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Resampling events per particle per unit time after `from`, with a
    /// 95% half-width from `batches` equal time batches.
    pub fn branching_rate(&self, from: f64, batches: usize) -> Result<(f64, f64)> {
        let n = self.len() as f64;
        let mut t = 0.0;
        let mut window: Vec<(f64, u32)> = Vec::new();
        for &(h, c) in &self.resample_log {
            t += h;
            if t > from + 1e-12 {
                window.push((h, c));
            }
        }
        if window.len() < batches.max(2) {
            return domain_err("too few steps after the burn-in to estimate the branching rate");
        }
        let per = window.len() / batches;
        let rates: Vec<f64> = window
            .chunks(per)
            .filter(|c| c.len() == per)
            .map(|c| {
                let (dur, cnt) = c.iter().fold((0.0, 0u64), |(d, k), &(h, e)| (d + h, k + u64::from(e)));
                cnt as f64 / (n * dur)
            })
            .collect();
        let total_dur: f64 = window.iter().map(|w| w.0).sum();
        let total: u64 = window.iter().map(|w| u64::from(w.1)).sum();
        let (_, half) = batch_means_ci(&rates)?;
        Ok((total as f64 / (n * total_dur), half))
    }
}

/// Advances the ensemble by `duration` (whole steps of `config.dt`).
pub fn fv_evolve(
    ensemble: &mut ParticleEnsemble,
    duration: f64,
    config: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
) -> Result<()> {
    let prop = Propagator::new(config, params, domain)?;
    let stepper = prop.stepper();
    let steps = (duration / config.dt).round() as usize;
    let mut alive = vec![true; ensemble.len()];
    for _ in 0..steps {
        ensemble
            .particles
            .par_iter_mut()
            .zip(ensemble.streams.par_iter_mut())
            .zip(alive.par_iter_mut())
            .for_each(|((x, rng), ok)| {
                stepper.advance(x, rng);
                *ok = domain.contains(x.q());
            });
        let survivors: Vec<usize> = alive.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect();
        let dead = ensemble.len() - survivors.len();
        ensemble.time += config.dt;
        if survivors.is_empty() {
            return Err(Error::Extinction { particles: ensemble.len(), time: ensemble.time });
        }
        for i in 0..ensemble.len() {
            if !alive[i] {
                let s = survivors[ensemble.selector.random_range(0..survivors.len())];
                ensemble.particles[i] = ensemble.particles[s];
            }
        }
        ensemble.resample_log.push((config.dt, dead as u32));
    }
    Ok(())
}

/// Decay-rate fit of a survival curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lambda0Fit {
    pub lambda0: f64,
    pub ci: (f64, f64),
    pub r2: f64,
    pub points: usize,
    pub window_start: f64,
}

/// Weighted least-squares slope of `-log S(t)` over `t >= window_start`.
///
/// Points with nonpositive estimates are dropped; weights are `S^2 / se^2`,
/// or uniform when standard errors are zero.
pub fn estimate_lambda0(curve: &[(f64, f64, f64)], window_start: f64) -> Result<Lambda0Fit> {
    let pts: Vec<&(f64, f64, f64)> = curve.iter().filter(|c| c.0 >= window_start && c.1 > 0.0 && c.1 < 1.0).collect();
    if pts.len() < 5 {
        return domain_err(format!("only {} usable survival points after t = {window_start}; need 5", pts.len()));
    }
    let x: Vec<f64> = pts.iter().map(|c| c.0).collect();
    let y: Vec<f64> = pts.iter().map(|c| -c.1.ln()).collect();
    let w: Vec<f64> = if pts.iter().all(|c| c.2 > 0.0) {
        pts.iter().map(|c| (c.1 / c.2).powi(2)).collect()
    } else {
        vec![1.0; pts.len()]
    };
    let fit = weighted_line_fit(&x, &y, &w)?;
    let half = t_quantile(0.95, (fit.n - 2) as f64) * fit.slope_se;
    Ok(Lambda0Fit { lambda0: fit.slope, ci: (fit.slope - half, fit.slope + half), r2: fit.r2, points: fit.n, window_start })
}

/// First window start whose local slope agrees with the late-time slope
/// within the late-time confidence interval.
pub fn select_window_start(curve: &[(f64, f64, f64)], candidates: &[f64]) -> Result<f64> {
    let late = candidates.last().copied().ok_or_else(|| Error::Domain("no candidate window starts".into()))?;
    let reference = estimate_lambda0(curve, late)?;
    for &s in candidates {
        if let Ok(f) = estimate_lambda0(curve, s) {
            if f.lambda0 >= reference.ci.0 && f.lambda0 <= reference.ci.1 {
                return Ok(s);
            }
        }
    }
    Ok(late)
}

/// Survival-slope estimate with a 95% interval from `batches` independent
/// trajectory batches.
pub fn survival_slope(records: &[AbsorptionRecord], times: &[f64], window_start: f64, batches: usize) -> Result<Lambda0Fit> {
    let full = estimate_lambda0(&crate::integrator::survival_curve(records, times), window_start)?;
    let per = records.len() / batches.max(2);
    let slopes: Vec<f64> = records
        .chunks(per)
        .filter(|c| c.len() == per)
        .map(|c| estimate_lambda0(&crate::integrator::survival_curve(c, times), window_start).map(|f| f.lambda0))
        .collect::<Result<_>>()?;
    let (_, half) = batch_means_ci(&slopes)?;
    Ok(Lambda0Fit { ci: (full.lambda0 - half, full.lambda0 + half), ..full })
}

/// Estimated quasi-stationary law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsdEstimate {
    pub histogram: PhaseHistogram,
    pub lambda0: f64,
    pub ci: (f64, f64),
    pub r2: f64,
}

/// Initial laws for conditioned runs and exit-law sampling.
#[derive(Debug, Clone)]
pub enum QsdSampler {
    /// Uniform draw from a particle snapshot.
    Ensemble(Vec<PhasePoint>),
    /// Piecewise-constant density on the dual cells of a spectral grid.
    Grid { grid: Grid, cumulative: Vec<f64>, nodes: Vec<usize> },
    /// Uniform on `O x [-p_max, p_max]^d` (positions by rejection from the bounding box).
    Uniform { domain: PositionDomain, p_max: f64 },
    Point(PhasePoint),
}

impl QsdSampler {
    /// Sampler from nonnegative node values `density` (e.g. the spectral `psi`).
    pub fn from_grid(grid: &Grid, density: &[f64]) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::Mismatch("density does not match the grid".into()));
        }
        let mut cumulative = Vec::new();
        let mut nodes = Vec::new();
        let mut acc = 0.0;
        for (k, &v) in density.iter().enumerate() {
            if v > 0.0 {
                acc += v * grid.weight(k);
                cumulative.push(acc);
                nodes.push(k);
            }
        }
        if acc <= 0.0 {
            return domain_err("grid density has no positive mass");
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        Ok(Self::Grid { grid: grid.clone(), cumulative, nodes })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PhasePoint> {
        match self {
            Self::Ensemble(pts) => {
                if pts.is_empty() {
                    return domain_err("empty particle snapshot");
                }
                Ok(pts[rng.random_range(0..pts.len())])
            }
            Self::Grid { grid, cumulative, nodes } => loop {
                let u: f64 = rng.random();
                let idx = cumulative.partition_point(|&c| c < u).min(nodes.len() - 1);
                let (i, j) = grid.coords(nodes[idx]);
                let (q0, q1) = grid.q_cell(i);
                let (p0, p1) = grid.p_cell(j);
                let q = q0 + (q1 - q0) * rng.random::<f64>();
                let p = p0 + (p1 - p0) * rng.random::<f64>();
                if q > grid.a && q < grid.b {
                    return Ok(PhasePoint::new_1d(q, p));
                }
            },
            Self::Uniform { domain, p_max } => {
                let (lo, hi) = domain.bounding_box();
                let d = domain.dim();
                loop {
                    let mut x = PhasePoint::zeros(d);
                    for i in 0..d {
                        x.q_mut()[i] = lo[i] + (hi[i] - lo[i]) * rng.random::<f64>();
                        x.p_mut()[i] = p_max * (2.0 * rng.random::<f64>() - 1.0);
                    }
                    if domain.contains(x.q()) {
                        return Ok(x);
                    }
                }
            }
            Self::Point(x) => Ok(*x),
        }
    }
}

/// Runs `n_samples` trajectories from `theta` to time `t` and returns their
/// final states conditioned on survival.
pub fn conditioned_states(
    theta: &QsdSampler,
    t: f64,
    n_samples: usize,
    config: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
    seed: u64,
) -> Result<Vec<PhasePoint>> {
    if n_samples == 0 {
        return domain_err("need at least one sample");
    }
    if t == 0.0 {
        return (0..n_samples).map(|i| theta.sample(&mut RngStream::new(seed, i as u64))).collect();
    }
    let cfg = TrajectoryConfig { t_max: t, record_path: false, ..*config };
    let prop = Propagator::new(&cfg, params, domain)?;
    let records = run_batch(|r| theta.sample(r), n_samples, &prop, seed)?;
    let survivors: Vec<PhasePoint> = records.iter().filter(|r| !r.absorbed).map(|r| r.exit_point).collect();
    if survivors.is_empty() {
        return Err(Error::Starvation { survivors: 0, samples: n_samples, time: t });
    }
    Ok(survivors)
}

/// Histogram of `P_theta(X_t in . | tau > t)` with the edges of `template`.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_law(
    theta: &QsdSampler,
    t: f64,
    n_samples: usize,
    config: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
    seed: u64,
    template: &PhaseHistogram,
) -> Result<PhaseHistogram> {
    template.like(&conditioned_states(theta, t, n_samples, config, params, domain, seed)?)
}

/// Exit observations from a quasi-stationary start.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitLaw {
    pub exit_times: Vec<f64>,
    /// Exit side index (0 = first boundary piece, for an interval the left end).
    pub sides: Vec<usize>,
    /// Outgoing normal momentum `p . n` at exit.
    pub normal_momenta: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub classes: Vec<BoundaryClass>,
    pub censored: usize,
    pub histogram: ExitHistogram,
}

/// Counts per boundary side and outgoing normal momentum bin on `[0, p_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitHistogram {
    pub p_max: f64,
    pub n_bins: usize,
    /// `counts[side][bin]`; the last bin also holds momenta beyond `p_max`.
    pub counts: Vec<Vec<f64>>,
}

impl ExitHistogram {
    pub fn bin_width(&self) -> f64 {
        self.p_max / self.n_bins as f64
    }
}

/// Side label of a boundary point: for an interval 0 is the left end and 1 the
/// right end; other domains use the sign of the first normal coordinate.
fn side_of(domain: &PositionDomain, q: &[f64]) -> usize {
    match domain.as_interval() {
        Some((a, b)) => usize::from((q[0] - a).abs() > (b - q[0]).abs()),
        None => usize::from(domain.outward_normal_tol(q, f64::INFINITY).map(|n| n[0] > 0.0).unwrap_or(false)),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn exit_law(
    start: &QsdSampler,
    n_samples: usize,
    config: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
    seed: u64,
    p_max: f64,
    n_bins: usize,
) -> Result<ExitLaw> {
    let prop = Propagator::new(config, params, domain)?;
    let records = run_batch(|r| start.sample(r), n_samples, &prop, seed)?;
    let mut law = ExitLaw {
        exit_times: Vec::new(),
        sides: Vec::new(),
        normal_momenta: Vec::new(),
        points: Vec::new(),
        classes: Vec::new(),
        censored: 0,
        histogram: ExitHistogram { p_max, n_bins, counts: vec![vec![0.0; n_bins]; 2] },
    };
    let width = p_max / n_bins as f64;
    for r in records {
        if !r.absorbed {
            law.censored += 1;
            continue;
        }
        let q = r.exit_point.q();
        let side = side_of(domain, q);
        let n = domain.outward_normal_tol(q, f64::INFINITY)?;
        let pn: f64 = r.exit_point.p().iter().zip(&n).map(|(p, n)| p * n).sum();
        let bin = ((pn.max(0.0) / width) as usize).min(n_bins - 1);
        law.histogram.counts[side][bin] += 1.0;
        law.exit_times.push(r.exit_time);
        law.sides.push(side);
        law.normal_momenta.push(pn);
        law.points.push(r.exit_point);
        law.classes.push(r.exit_class);
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_fit() {
        let curve: Vec<(f64, f64, f64)> = (1..=10).map(|t| (t as f64, (-2.0 * t as f64).exp(), 0.0)).collect();
        let f = estimate_lambda0(&curve, 0.0).unwrap();
        assert!((f.lambda0 - 2.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subdominant_mode_suppressed_by_window() {
        let curve: Vec<(f64, f64, f64)> = (0..=40)
            .map(|k| {
                let t = k as f64 * 0.25;
                (t, (-2.0 * t).exp() * (1.0 + 0.5 * (-3.0 * t).exp()), 0.0)
            })
            .collect();
        let f = estimate_lambda0(&curve, 2.0).unwrap();
        assert!((f.lambda0 - 2.0).abs() < 0.02);
        assert!(estimate_lambda0(&curve[..4], 0.0).is_err());
    }

    #[test]
    fn two_particles_coincide_after_absorption() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        let params = ModelParams::free_1d(0.0, 1e-6).unwrap();
        let start = vec![PhasePoint::new_1d(0.999, 5.0), PhasePoint::new_1d(0.5, 0.0)];
        let mut e = ParticleEnsemble::new(start, &o, 1).unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 1.0).unwrap();
        fv_evolve(&mut e, 1e-3, &cfg, &params, &o).unwrap();
        assert_eq!(e.particles[0], e.particles[1]);
        assert_eq!(e.resample_log, vec![(1e-3, 1)]);
        assert_eq!(e.len(), 2);
    }

    #[test]
    fn extinction_is_an_error() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        let params = ModelParams::free_1d(0.0, 1e-6).unwrap();
        let start = vec![PhasePoint::new_1d(0.999, 5.0), PhasePoint::new_1d(0.001, -5.0)];
        let mut e = ParticleEnsemble::new(start, &o, 1).unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 1.0).unwrap();
        assert!(matches!(fv_evolve(&mut e, 1e-3, &cfg, &params, &o), Err(Error::Extinction { .. })));
    }

    #[test]
    fn grid_sampler_stays_inside() {
        let g = Grid::new(0.0, 1.0, 2.0, 8, 8).unwrap();
        let s = QsdSampler::from_grid(&g, &vec![1.0; g.len()]).unwrap();
        let mut r = RngStream::new(3, 0);
        for _ in 0..1000 {
            let x = s.sample(&mut r).unwrap();
            assert!(x.q()[0] > 0.0 && x.q()[0] < 1.0 && x.p()[0].abs() <= 2.0);
        }
    }
}
