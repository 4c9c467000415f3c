//! Time stepping for the Langevin and adjoint Langevin dynamics with
//! absorption at the boundary of the position domain.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryClass, PhasePoint, PositionDomain, DEFAULT_TOL0, MAX_DIM};
use crate::error::{domain_err, Error, Result};
use crate::gaussian::gaussian_moments;
use crate::model::{ForceField, ModelParams};
use crate::rng::RngStream;
use crate::special::{phi1, impulse_q};
use crate::stats::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    OuSplitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    #[default]
    Interpolated,
    EndOfStep,
}

/// Which of the two processes to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// `dq = p dt`, `dp = F dt - gamma p dt + sigma dB`.
    #[default]
    Forward,
    /// `dq = -p dt`, `dp = -F dt + gamma p dt + sigma dB`.
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    pub crossing: Crossing,
    pub record_path: bool,
    pub dynamics: Dynamics,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        let c = Self {
            dt,
            t_max,
            scheme: Scheme::default(),
            crossing: Crossing::default(),
            record_path: false,
            dynamics: Dynamics::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config { key: "integrator.dt".into(), message: format!("dt must be > 0, got {}", self.dt) });
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::Config {
                key: "integrator.t_max".into(),
                message: format!("t_max must be finite and >= dt, got {}", self.t_max),
            });
        }
        Ok(())
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_crossing(mut self, crossing: Crossing) -> Self {
        self.crossing = crossing;
        self
    }

    pub fn with_dynamics(mut self, dynamics: Dynamics) -> Self {
        self.dynamics = dynamics;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_path(mut self) -> Self {
        self.record_path = true;
        self
    }
}

/// Per-step coefficients of the exact Ornstein-Uhlenbeck update with the force
/// frozen at the start of the step.
#[derive(Debug, Clone, Copy)]
struct OuCoefficients {
    decay: f64,
    q_from_p: f64,
    q_from_force: f64,
    p_from_force: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

/// One-step map of either dynamics for a fixed step size.
///
/// The adjoint dynamics is the forward dynamics with friction `-gamma`
/// written in the variables `(q, -p)`, so both share one kernel.
#[derive(Debug, Clone)]
pub struct Stepper {
    dt: f64,
    scheme: Scheme,
    flip: bool,
    friction: f64,
    em_noise: f64,
    ou: OuCoefficients,
    force: ForceField,
}

impl Stepper {
    pub fn new(params: &ModelParams, dt: f64, scheme: Scheme, dynamics: Dynamics) -> Result<Self> {
        if !(dt > 0.0) {
            return domain_err(format!("step size must be positive, got {dt}"));
        }
        let flip = dynamics == Dynamics::Adjoint;
        let eff = if flip { params.reversed() } else { params.clone() };
        let rho = eff.gamma * dt;
        let m = gaussian_moments(&PhasePoint::zeros(eff.dim), dt, &eff, 1.0)?;
        let (l11, l21, l22) = m.cholesky();
        Ok(Self {
            dt,
            scheme,
            flip,
            friction: eff.gamma,
            em_noise: eff.sigma * dt.sqrt(),
            ou: OuCoefficients {
                decay: (-rho).exp(),
                q_from_p: dt * phi1(rho),
                q_from_force: dt * dt * impulse_q(rho),
                p_from_force: dt * phi1(rho),
                l11,
                l21,
                l22,
            },
            force: eff.force,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn advance<R: Rng + ?Sized>(&self, x: &mut PhasePoint, rng: &mut R) {
        self.advance_with(x, || rng.sample(StandardNormal))
    }

    /// Advances `x` by one step using `normal` as the source of standard
    /// Gaussian increments (two per coordinate for the splitting scheme).
    #[inline]
    pub fn advance_with(&self, x: &mut PhasePoint, mut normal: impl FnMut() -> f64) {
        let d = x.dim();
        if self.flip {
            x.p_mut().iter_mut().for_each(|v| *v = -*v);
        }
        let mut f = [0.0; MAX_DIM];
        self.force.eval_into(x.q(), &mut f);
        match self.scheme {
            Scheme::EulerMaruyama => {
                for i in 0..d {
                    let (q, p) = (x.q()[i], x.p()[i]);
                    x.q_mut()[i] = q + p * self.dt;
                    x.p_mut()[i] = p + (f[i] - self.friction * p) * self.dt + self.em_noise * normal();
                }
            }
            Scheme::OuSplitting => {
                let c = &self.ou;
                for i in 0..d {
                    let (q, p) = (x.q()[i], x.p()[i]);
                    let z1 = normal();
                    let z2 = normal();
                    x.q_mut()[i] = q + p * c.q_from_p + f[i] * c.q_from_force + c.l11 * z1;
                    x.p_mut()[i] = p * c.decay + f[i] * c.p_from_force + c.l21 * z1 + c.l22 * z2;
                }
            }
        }
        if self.flip {
            x.p_mut().iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// One step of the forward Langevin dynamics.
pub fn step_langevin<R: Rng + ?Sized>(x: &PhasePoint, dt: f64, params: &ModelParams, scheme: Scheme, rng: &mut R) -> Result<PhasePoint> {
    let mut y = *x;
    Stepper::new(params, dt, scheme, Dynamics::Forward)?.advance(&mut y, rng);
    Ok(y)
}

/// One step of the adjoint Langevin dynamics.
pub fn step_adjoint<R: Rng + ?Sized>(x: &PhasePoint, dt: f64, params: &ModelParams, scheme: Scheme, rng: &mut R) -> Result<PhasePoint> {
    let mut y = *x;
    Stepper::new(params, dt, scheme, Dynamics::Adjoint)?.advance(&mut y, rng);
    Ok(y)
}

/// Outcome of a trajectory run up to absorption or the horizon.
///
/// Censored runs carry `absorbed = false`, `exit_time = t_max` and the state at
/// the horizon in `exit_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionRecord {
    pub absorbed: bool,
    pub exit_time: f64,
    pub exit_point: PhasePoint,
    pub exit_class: BoundaryClass,
    pub path: Option<Vec<PhasePoint>>,
}

impl AbsorptionRecord {
    /// `1{tau > t}` for `t <= t_max`.
    pub fn survives(&self, t: f64) -> bool {
        !self.absorbed || self.exit_time > t
    }
}

/// Reusable trajectory runner for a fixed configuration.
#[derive(Debug, Clone)]
pub struct Propagator {
    config: TrajectoryConfig,
    domain: PositionDomain,
    full: Stepper,
    n_full: usize,
    last: Option<Stepper>,
}

impl Propagator {
    pub fn new(config: &TrajectoryConfig, params: &ModelParams, domain: &PositionDomain) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        if params.dim != domain.dim() {
            return Err(Error::Mismatch(format!("model dimension {} vs domain dimension {}", params.dim, domain.dim())));
        }
        let full = Stepper::new(params, config.dt, config.scheme, config.dynamics)?;
        let ratio = config.t_max / config.dt;
        let mut n_full = (ratio + 1e-9).floor() as usize;
        let rem = config.t_max - n_full as f64 * config.dt;
        let last = if rem > 1e-9 * config.dt {
            Some(Stepper::new(params, rem, config.scheme, config.dynamics)?)
        } else {
            n_full = n_full.max(1);
            None
        };
        Ok(Self { config: *config, domain: domain.clone(), full, n_full, last })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.config
    }

    pub fn domain(&self) -> &PositionDomain {
        &self.domain
    }

    pub fn step_size(&self) -> f64 {
        self.config.dt
    }

    /// Stepper for the full step size.
    pub fn stepper(&self) -> &Stepper {
        &self.full
    }

    pub fn run<R: Rng + ?Sized>(&self, x0: &PhasePoint, rng: &mut R) -> Result<AbsorptionRecord> {
        if x0.dim() != self.domain.dim() || !self.domain.contains(x0.q()) {
            return domain_err(format!("initial point {:?} is not in the phase domain", x0.q()));
        }
        let mut path = self.config.record_path.then(|| vec![*x0]);
        let mut x = *x0;
        let mut t = 0.0;
        let steps = (0..self.n_full).map(|_| &self.full).chain(self.last.iter());
        for stepper in steps {
            let mut y = x;
            stepper.advance(&mut y, rng);
            let s1 = self.domain.signed_distance(y.q());
            if s1 <= 0.0 {
                return Ok(self.exit_record(&x, &y, t, stepper.dt(), s1, path));
            }
            t += stepper.dt();
            x = y;
            if let Some(p) = path.as_mut() {
                p.push(x);
            }
        }
        Ok(AbsorptionRecord {
            absorbed: false,
            exit_time: self.config.t_max,
            exit_point: x,
            exit_class: BoundaryClass::Interior,
            path,
        })
    }

    fn exit_record(
        &self,
        x: &PhasePoint,
        y: &PhasePoint,
        t: f64,
        h: f64,
        s1: f64,
        path: Option<Vec<PhasePoint>>,
    ) -> AbsorptionRecord {
        let (theta, mut z) = match self.config.crossing {
            Crossing::Interpolated => {
                let s0 = self.domain.signed_distance(x.q());
                let theta = (s0 / (s0 - s1)).clamp(0.0, 1.0);
                (theta, x.lerp(y, theta))
            }
            Crossing::EndOfStep => (1.0, *y),
        };
        let qb = self.domain.project_to_boundary(z.q());
        let d = z.dim();
        z.q_mut().copy_from_slice(&qb[..d]);
        let mut path = path;
        if let Some(p) = path.as_mut() {
            p.push(z);
        }
        AbsorptionRecord {
            absorbed: true,
            exit_time: (t + theta * h).min(self.config.t_max),
            exit_point: z,
            exit_class: self.domain.classify_momentum(&z, DEFAULT_TOL0),
            path,
        }
    }
}

/// Runs one trajectory from `x0` until it leaves the domain or reaches `t_max`.
pub fn simulate_until_absorption<R: Rng + ?Sized>(
    x0: &PhasePoint,
    config: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
    rng: &mut R,
) -> Result<AbsorptionRecord> {
    Propagator::new(config, params, domain)?.run(x0, rng)
}

/// Runs `n` trajectories in parallel; trajectory `i` draws its start point
/// and its noise from stream `(seed, i)`. The output order is the trajectory order.
pub fn run_batch<S>(
    sampler: S,
    n: usize,
    propagator: &Propagator,
    seed: u64,
) -> Result<Vec<AbsorptionRecord>>
where
    S: Fn(&mut RngStream) -> Result<PhasePoint> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let x0 = sampler(&mut rng)?;
            propagator.run(&x0, &mut rng)
        })
        .collect()
}

/// Monte Carlo estimate of `P_x0(tau > t)` with its binomial standard error.
pub fn survival_probability(
    x0: &PhasePoint,
    t: f64,
    n_samples: usize,
    config: &TrajectoryConfig,
    params: &ModelParams,
    domain: &PositionDomain,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return domain_err("need at least one sample");
    }
    if !domain.contains(x0.q()) {
        return domain_err("initial point is not in the phase domain");
    }
    if t == 0.0 {
        return Ok((1.0, 0.0));
    }
    if !(t > 0.0) {
        return domain_err(format!("time must be nonnegative, got {t}"));
    }
    let cfg = TrajectoryConfig { t_max: t, record_path: false, ..*config };
    let cfg = if cfg.dt > t { TrajectoryConfig { dt: t, ..cfg } } else { cfg };
    let prop = Propagator::new(&cfg, params, domain)?;
    let records = run_batch(|_| Ok(*x0), n_samples, &prop, seed)?;
    let alive: Vec<f64> = records.iter().map(|r| if r.absorbed { 0.0 } else { 1.0 }).collect();
    let p = pairwise_sum(&alive) / n_samples as f64;
    Ok((p, (p * (1.0 - p) / n_samples as f64).sqrt()))
}

/// Empirical survival curve `t -> P(tau > t)` from a batch of records.
pub fn survival_curve(records: &[AbsorptionRecord], times: &[f64]) -> Vec<(f64, f64, f64)> {
    let n = records.len() as f64;
    times
        .iter()
        .map(|&t| {
            let alive: Vec<f64> = records.iter().map(|r| if r.survives(t) { 1.0 } else { 0.0 }).collect();
            let p = pairwise_sum(&alive) / n;
            (t, p, (p * (1.0 - p) / n).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(gamma: f64) -> ModelParams {
        ModelParams::free_1d(gamma, 1.0).unwrap()
    }

    #[test]
    fn noiseless_transport() {
        let x = PhasePoint::new_1d(0.3, 2.0);
        for scheme in [Scheme::EulerMaruyama, Scheme::OuSplitting] {
            let s = Stepper::new(&free(0.0), 0.01, scheme, Dynamics::Forward).unwrap();
            let mut y = x;
            s.advance_with(&mut y, || 0.0);
            assert!((y.q()[0] - 0.32).abs() < 1e-15 && y.p()[0] == 2.0);
            let s = Stepper::new(&free(0.0), 0.01, scheme, Dynamics::Adjoint).unwrap();
            let mut y = x;
            s.advance_with(&mut y, || 0.0);
            assert!((y.q()[0] - 0.28).abs() < 1e-15 && y.p()[0] == 2.0);
        }
    }

    #[test]
    fn noiseless_friction() {
        let dt = 0.1;
        let s = Stepper::new(&free(1.0), dt, Scheme::OuSplitting, Dynamics::Forward).unwrap();
        let mut y = PhasePoint::new_1d(0.0, 1.5);
        s.advance_with(&mut y, || 0.0);
        assert!((y.p()[0] - 1.5 * (-dt).exp()).abs() < 1e-15);
        assert!((y.q()[0] - 1.5 * phi1(dt) * dt).abs() < 1e-15);
    }

    #[test]
    fn adjoint_force_and_antidamping() {
        let p = ModelParams::new(0.0, 1.0, 1, ForceField::Constant { value: vec![3.0] }).unwrap();
        let s = Stepper::new(&p, 0.01, Scheme::OuSplitting, Dynamics::Adjoint).unwrap();
        let mut y = PhasePoint::new_1d(0.0, 1.0);
        s.advance_with(&mut y, || 0.0);
        assert!((y.p()[0] - (1.0 - 0.03)).abs() < 1e-14);

        let s = Stepper::new(&free(0.5), 0.01, Scheme::OuSplitting, Dynamics::Adjoint).unwrap();
        let mut y = PhasePoint::new_1d(0.0, -2.0);
        for _ in 0..100 {
            s.advance_with(&mut y, || 0.0);
        }
        assert!((y.p()[0].abs() - 2.0 * 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn ballistic_exit_both_sides() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        let p = free(0.0);
        let cfg = TrajectoryConfig::new(1e-4, 1.0).unwrap();
        let prop = Propagator::new(&cfg, &p, &o).unwrap();
        // zero-noise run through the stepper directly
        for (p0, side) in [(10.0, 1.0), (-10.0, 0.0)] {
            let mut x = PhasePoint::new_1d(0.5, p0);
            let mut t = 0.0;
            loop {
                let mut y = x;
                prop.stepper().advance_with(&mut y, || 0.0);
                if o.signed_distance(y.q()) <= 0.0 {
                    let rec = prop.exit_record(&x, &y, t, cfg.dt, o.signed_distance(y.q()), None);
                    assert!((rec.exit_time - 0.05).abs() <= cfg.dt);
                    assert_eq!(rec.exit_point.q()[0], side);
                    assert_eq!(rec.exit_class, BoundaryClass::GammaPlus);
                    break;
                }
                t += cfg.dt;
                x = y;
            }
        }
    }

    #[test]
    fn censoring_and_start_check() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        let p = free(1.0);
        let cfg = TrajectoryConfig::new(1e-3, 0.01).unwrap();
        let mut rng = RngStream::new(1, 0);
        let rec = simulate_until_absorption(&PhasePoint::new_1d(0.5, 0.0), &cfg, &p, &o, &mut rng).unwrap();
        assert!(!rec.absorbed);
        assert_eq!(rec.exit_time, 0.01);
        assert!(simulate_until_absorption(&PhasePoint::new_1d(1.5, 0.0), &cfg, &p, &o, &mut rng).is_err());
    }

    #[test]
    fn survival_at_zero_time() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 1.0).unwrap();
        let s = survival_probability(&PhasePoint::new_1d(0.5, 0.0), 0.0, 10, &cfg, &free(1.0), &o, 3).unwrap();
        assert_eq!(s, (1.0, 0.0));
    }

    #[test]
    fn horizon_not_multiple_of_step() {
        let o = PositionDomain::interval(-100.0, 100.0).unwrap();
        let cfg = TrajectoryConfig::new(0.3, 1.0).unwrap().with_path();
        let prop = Propagator::new(&cfg, &free(0.0), &o).unwrap();
        let rec = prop.run(&PhasePoint::new_1d(0.0, 0.0), &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(rec.path.unwrap().len(), 5);
    }
}
