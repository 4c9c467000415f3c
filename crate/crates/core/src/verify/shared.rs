use serde::Serialize;

use crate::config::RunConfig;
use crate::domain::{PhasePoint, PositionDomain};
use crate::error::{Error, Result};
use crate::fleming_viot::{fv_evolve, ParticleEnsemble, QsdSampler};
use crate::integrator::{run_batch, Propagator, TrajectoryConfig};
use crate::model::ModelParams;
use crate::spectral::{solve_grid, EigenPair, Grid};

pub(crate) fn interval(config: &RunConfig) -> Result<(f64, f64)> {
    config
        .position_domain()?
        .as_interval()
        .ok_or_else(|| Error::Unsupported("this check needs a one-dimensional interval domain".into()))
}

/// Pooled Fleming-Viot snapshots after the burn-in, with the branching rate.
#[derive(Debug, Clone, Serialize)]
pub struct QsdPool {
    #[serde(skip)]
    pub points: Vec<PhasePoint>,
    pub rate: f64,
    pub rate_half_width: f64,
    pub snapshots: usize,
    pub particles: usize,
}

impl QsdPool {
    pub fn sampler(&self) -> QsdSampler {
        QsdSampler::Ensemble(self.points.clone())
    }
}

/// Runs the configured particle system and keeps `snapshots` equally spaced
/// snapshots over the post-burn-in horizon.
pub fn qsd_pool(config: &RunConfig, seed: u64, snapshots: usize) -> Result<QsdPool> {
    let domain = config.position_domain()?;
    let params = config.params()?;
    let traj = config.trajectory()?;
    let start = QsdSampler::Uniform { domain: domain.clone(), p_max: params.sigma };
    let mut ens = ParticleEnsemble::from_sampler(&start, config.fv.particles, &domain, seed)?;
    fv_evolve(&mut ens, config.fv.burnin, &traj, &params, &domain)?;
    let snapshots = snapshots.max(1);
    let mut points = Vec::with_capacity(snapshots * ens.len());
    for _ in 0..snapshots {
        fv_evolve(&mut ens, config.fv.horizon / snapshots as f64, &traj, &params, &domain)?;
        points.extend_from_slice(&ens.particles);
    }
    let (rate, rate_half_width) = ens.branching_rate(config.fv.burnin, config.fv.batches)?;
    Ok(QsdPool { points, rate, rate_half_width, snapshots, particles: ens.len() })
}

pub(crate) struct Spectral {
    pub grid: Grid,
    pub pair: EigenPair,
}

pub(crate) fn solve_main(config: &RunConfig) -> Result<Spectral> {
    let grid = config.main_grid()?;
    let (_, _, pair) = solve_grid(&grid, &config.params()?)?;
    Ok(Spectral { grid, pair })
}

/// Bilinear interpolation of node values; zero outside the grid.
pub(crate) fn interpolate(grid: &Grid, values: &[f64], q: f64, p: f64) -> f64 {
    if !(q >= grid.a && q <= grid.b && p.abs() <= grid.p_max) {
        return 0.0;
    }
    let u = ((q - grid.a) / grid.h_q).min((grid.n_q + 1) as f64);
    let v = ((p + grid.p_max) / grid.h_p).min((grid.n_p - 1) as f64);
    let i = (u.floor() as usize).min(grid.n_q);
    let j = (v.floor() as usize).min(grid.n_p - 2);
    // the last column can be narrower than h_q
    let s = ((q - grid.q(i)) / (grid.q(i + 1) - grid.q(i))).clamp(0.0, 1.0);
    let r = ((p - grid.p(j)) / (grid.p(j + 1) - grid.p(j))).clamp(0.0, 1.0);
    let f = |i, j| values[grid.index(i, j)];
    (1.0 - s) * ((1.0 - r) * f(i, j) + r * f(i, j + 1)) + s * ((1.0 - r) * f(i + 1, j) + r * f(i + 1, j + 1))
}

const GL3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Mean of `f` over a rectangle by a 3x3 Gauss-Legendre rule on `sub x sub` tiles.
pub(crate) fn box_mean(f: impl Fn(f64, f64) -> f64, q: (f64, f64), p: (f64, f64), sub: usize) -> f64 {
    let hq = (q.1 - q.0) / sub as f64;
    let hp = (p.1 - p.0) / sub as f64;
    let mut acc = 0.0;
    for a in 0..sub {
        for b in 0..sub {
            let (qc, pc) = (q.0 + (a as f64 + 0.5) * hq, p.0 + (b as f64 + 0.5) * hp);
            for (x, wx) in GL3 {
                for (y, wy) in GL3 {
                    acc += wx * wy * f(qc + 0.5 * hq * x, pc + 0.5 * hp * y);
                }
            }
        }
    }
    acc / (4.0 * (sub * sub) as f64)
}

/// Evolves each state once for `duration` and returns the survivors in order.
pub(crate) fn evolve_survivors(
    states: &[PhasePoint],
    duration: f64,
    traj: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
    seed: u64,
) -> Result<Vec<PhasePoint>> {
    let prop = Propagator::new(&traj.with_t_max(duration), params, domain)?;
    let records = run_batch(|r| Ok(states[r.index() as usize]), states.len(), &prop, seed)?;
    Ok(records.into_iter().filter(|r| !r.absorbed).map(|r| r.exit_point).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_bilinear_functions() {
        let g = Grid::new(0.0, 1.0, 2.0, 9, 11).unwrap();
        let f = |q: f64, p: f64| 1.0 + 2.0 * q - p + 0.5 * q * p;
        let v: Vec<f64> = (0..g.len()).map(|k| {
            let (i, j) = g.coords(k);
            f(g.q(i), g.p(j))
        }).collect();
        for (q, p) in [(0.0, 0.0), (0.33, -1.7), (0.999, 1.99), (1.0, 2.0)] {
            assert!((interpolate(&g, &v, q, p) - f(q, p)).abs() < 1e-12);
        }
        assert_eq!(interpolate(&g, &v, 0.5, 2.5), 0.0);
    }

    #[test]
    fn box_mean_integrates_cubics() {
        let m = box_mean(|q, p| q * q * q + p * p, (0.0, 1.0), (0.0, 2.0), 1);
        assert!((m - (0.25 + 4.0 / 3.0)).abs() < 1e-14);
    }
}
