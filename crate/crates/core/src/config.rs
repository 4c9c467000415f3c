//! Run configuration: one TOML file with one table per subsystem.
//!
//! Every table except `[domain]` and `[model]` is optional; missing keys take
//! the defaults below and the resolved configuration is echoed into output
//! headers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, PositionDomain};
use crate::error::{Error, Result};
use crate::integrator::{Crossing, Dynamics, Scheme, TrajectoryConfig};
use crate::model::{ForceField, ModelParams};
use crate::spectral::{default_p_max, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    pub domain: DomainSpec,
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub fv: FvSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub gaussian: GaussianSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    pub sigma: f64,
    #[serde(default = "defaults::force")]
    pub force: ForceField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    pub crossing: Crossing,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { dt: 1e-3, t_max: 50.0, scheme: Scheme::OuSplitting, crossing: Crossing::Interpolated }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FvSection {
    pub particles: usize,
    pub burnin: f64,
    pub horizon: f64,
    /// Time batches for the branching-rate interval.
    pub batches: usize,
    pub q_bins: usize,
    pub p_bins: usize,
}

impl Default for FvSection {
    fn default() -> Self {
        Self { particles: 10_000, burnin: 5.0, horizon: 20.0, batches: 20, q_bins: 64, p_bins: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub n_q: usize,
    pub n_p: usize,
    /// Momentum cutoff; required when `gamma <= 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Refinement levels of the Richardson study, starting at `n / 2^(levels-1)`.
    pub levels: usize,
    /// Grid for dense spectra (gap, long-time checks).
    pub dense_n: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self { n_q: 128, n_p: 128, p_max: None, tol: 1e-10, max_iter: 300, levels: 3, dense_n: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianSection {
    pub c_alpha: f64,
    pub alpha: f64,
    pub tol: f64,
}

impl Default for GaussianSection {
    fn default() -> Self {
        Self { c_alpha: 1.0, alpha: 0.5, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    #[default]
    All,
    Duality,
    Bound,
    Qsd,
    Exit,
    Longtime,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "duality" => Ok(Self::Duality),
            "bound" => Ok(Self::Bound),
            "qsd" => Ok(Self::Qsd),
            "exit" => Ok(Self::Exit),
            "longtime" => Ok(Self::Longtime),
            _ => Err(Error::Config { key: "verify.suite".into(), message: format!("unknown suite `{s}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suite: Suite,
    /// Significance level of the statistical tests.
    pub significance: f64,
    /// Trajectories per Monte Carlo estimate.
    pub samples: usize,
    pub c_alpha_scan: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Time of the bound and duality comparisons.
    pub t_compare: f64,
    /// TV budget for discretisation bias in the fixed-point check.
    pub tv_bias_budget: f64,
    pub qsd_times: Vec<f64>,
    /// Grid sizes (`n_q = n_p`) of the duality refinement study.
    pub duality_levels: Vec<usize>,
    pub duality_tol: f64,
    pub radius_tol: f64,
    pub longtime_times: Vec<f64>,
    pub histogram_bins: usize,
    pub exit_p_bins: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            significance: 0.01,
            samples: 100_000,
            c_alpha_scan: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            alphas: vec![0.5, 0.7, 0.9],
            t_compare: 0.5,
            tv_bias_budget: 0.05,
            qsd_times: vec![0.2, 1.0],
            duality_levels: vec![16, 32, 64],
            duality_tol: 0.05,
            radius_tol: 1e-6,
            longtime_times: (1..=10).map(f64::from).collect(),
            histogram_bins: 16,
            exit_p_bins: 16,
        }
    }
}

mod defaults {
    use crate::model::ForceField;

    pub fn seed() -> u64 {
        20240601
    }

    pub fn force() -> ForceField {
        ForceField::Zero
    }
}

fn bad<T>(key: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Config { key: key.into(), message: message.into() })
}

impl RunConfig {
    /// Minimal configuration with every optional table at its default.
    pub fn new(domain: DomainSpec, gamma: f64, sigma: f64, force: ForceField) -> Result<Self> {
        let c = Self {
            seed: defaults::seed(),
            domain,
            model: ModelSection { gamma, sigma, force },
            integrator: IntegratorSection::default(),
            fv: FvSection::default(),
            spectral: SpectralSection::default(),
            gaussian: GaussianSection::default(),
            verify: VerifySection::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| {
            let key = match e.span() {
                Some(s) => {
                    let before = &text[..s.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "<document>".into(),
            };
            Error::Config { key, message: e.message().trim().to_string() }
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn position_domain(&self) -> Result<PositionDomain> {
        PositionDomain::from_spec(&self.domain).map_err(|e| Error::Config { key: "domain".into(), message: e.to_string() })
    }

    pub fn params(&self) -> Result<ModelParams> {
        let d = self.position_domain()?.dim();
        ModelParams::new(self.model.gamma, self.model.sigma, d, self.model.force.clone())
    }

    pub fn trajectory(&self) -> Result<TrajectoryConfig> {
        let c = TrajectoryConfig {
            dt: self.integrator.dt,
            t_max: self.integrator.t_max,
            scheme: self.integrator.scheme,
            crossing: self.integrator.crossing,
            record_path: false,
            dynamics: Dynamics::Forward,
        };
        c.validate()?;
        Ok(c)
    }

    /// Momentum cutoff of the spectral grid.
    pub fn p_max(&self) -> Result<f64> {
        match self.spectral.p_max.or_else(|| default_p_max(self.model.gamma, self.model.sigma)) {
            Some(p) if p > 0.0 => Ok(p),
            Some(p) => bad("spectral.p_max", format!("must be positive, got {p}")),
            None => bad("spectral.p_max", "required when gamma <= 0"),
        }
    }

    /// Spectral grid of `n_q x n_p` nodes on the configured interval.
    pub fn grid(&self, n_q: usize, n_p: usize) -> Result<Grid> {
        let (a, b) = self
            .position_domain()?
            .as_interval()
            .ok_or_else(|| Error::Unsupported("spectral solver needs an interval domain".into()))?;
        Grid::new(a, b, self.p_max()?, n_q, n_p)
    }

    pub fn main_grid(&self) -> Result<Grid> {
        self.grid(self.spectral.n_q, self.spectral.n_p)
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.position_domain()?;
        if !self.model.gamma.is_finite() {
            return bad("model.gamma", "must be finite");
        }
        if !(self.model.sigma > 0.0 && self.model.sigma.is_finite()) {
            return bad("model.sigma", format!("sigma must be > 0, got {}", self.model.sigma));
        }
        self.model.force.validate(domain.dim())?;
        let i = &self.integrator;
        if !(i.dt > 0.0 && i.dt.is_finite()) {
            return bad("integrator.dt", format!("must be > 0, got {}", i.dt));
        }
        if !(i.t_max >= i.dt && i.t_max.is_finite()) {
            return bad("integrator.t_max", "must be finite and at least dt");
        }
        let f = &self.fv;
        if f.particles < 2 {
            return bad("fv.particles", "need at least 2 particles");
        }
        if !(f.burnin >= 0.0 && f.horizon > 0.0) {
            return bad("fv.horizon", "need burnin >= 0 and horizon > 0");
        }
        if f.batches < 2 {
            return bad("fv.batches", "need at least 2 batches");
        }
        if f.q_bins == 0 || f.p_bins == 0 {
            return bad("fv.q_bins", "bin counts must be positive");
        }
        let s = &self.spectral;
        if s.n_q < 8 || s.n_p < 8 {
            return bad("spectral.n_q", "grids need at least 8 nodes per axis");
        }
        if !(s.tol > 0.0) {
            return bad("spectral.tol", "must be positive");
        }
        if s.levels == 0 || s.n_q >> (s.levels - 1) < 8 || s.n_p >> (s.levels - 1) < 8 {
            return bad("spectral.levels", "coarsest refinement level would have fewer than 8 nodes");
        }
        if s.dense_n < 8 {
            return bad("spectral.dense_n", "need at least 8 nodes");
        }
        if let Some(p) = s.p_max {
            if !(p > 0.0 && p.is_finite()) {
                return bad("spectral.p_max", "must be positive");
            }
        }
        let g = &self.gaussian;
        if !(g.c_alpha > 0.0) {
            return bad("gaussian.c_alpha", "must be positive");
        }
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return bad("gaussian.alpha", "must lie in (0, 1)");
        }
        if !(g.tol > 0.0) {
            return bad("gaussian.tol", "must be positive");
        }
        let v = &self.verify;
        if !(v.significance > 0.0 && v.significance < 1.0) {
            return bad("verify.significance", "must lie in (0, 1)");
        }
        if v.samples == 0 {
            return bad("verify.samples", "must be positive");
        }
        if v.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("verify.alphas", "every alpha must lie in (0, 1)");
        }
        if v.c_alpha_scan.iter().any(|c| !(*c > 0.0)) {
            return bad("verify.c_alpha_scan", "values must be positive");
        }
        if !(v.t_compare > 0.0) {
            return bad("verify.t_compare", "must be positive");
        }
        if v.qsd_times.iter().chain(&v.longtime_times).any(|t| !(*t > 0.0)) {
            return bad("verify.qsd_times", "times must be positive");
        }
        if v.duality_levels.iter().any(|&n| n < 8) {
            return bad("verify.duality_levels", "grids need at least 8 nodes");
        }
        if v.histogram_bins == 0 || v.exit_p_bins == 0 {
            return bad("verify.histogram_bins", "bin counts must be positive");
        }
        Ok(())
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    RunConfig::from_toml(&text)
}

/// Reference problems shipped with the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// `(0,1)`, no force, `gamma = 1`, `sigma = 1`.
    R1,
    /// `(0,1)`, no force, `gamma = 0`, `sigma = 1`.
    R2,
    /// `(-1,1)`, double well, `gamma = 1`, `sigma = 0.8`.
    R3,
    /// `(0,1)`, no force, `gamma = -0.2`, `sigma = 1`.
    R4,
}

impl Reference {
    pub fn config(self) -> RunConfig {
        let (a, b, gamma, sigma, force, seed) = match self {
            Self::R1 => (0.0, 1.0, 1.0, 1.0, ForceField::Zero, 101),
            Self::R2 => (0.0, 1.0, 0.0, 1.0, ForceField::Zero, 202),
            Self::R3 => (-1.0, 1.0, 1.0, 0.8, ForceField::DoubleWell { height: 1.0 }, 303),
            Self::R4 => (0.0, 1.0, -0.2, 1.0, ForceField::Zero, 404),
        };
        let mut c = RunConfig::new(DomainSpec::Interval { a, b }, gamma, sigma, force).expect("reference problems are valid");
        c.seed = seed;
        if gamma <= 0.0 {
            c.spectral.p_max = Some(6.0);
        }
        c
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::R1 => "R1",
            Self::R2 => "R2",
            Self::R3 => "R3",
            Self::R4 => "R4",
        }
    }

    pub fn all() -> [Self; 4] {
        [Self::R1, Self::R2, Self::R3, Self::R4]
    }
}
