use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kinetic_qsd::integrator::{run_batch, survival_curve};
use kinetic_qsd::spectral::{richardson, solve_grid};
use kinetic_qsd::{
    ExitLaw, ParticleEnsemble, PhasePoint, Propagator, QsdSampler, Reference, RunConfig, Suite,
};

fn py_err(e: kinetic_qsd::Error) -> PyErr {
    match e {
        kinetic_qsd::Error::Config { .. } | kinetic_qsd::Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A validated run configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        kinetic_qsd::load_config(path).map(|inner| Self { inner }).map_err(py_err)
    }

    /// One of the built-in reference problems "R1" .. "R4".
    #[staticmethod]
    fn reference(name: &str) -> PyResult<Self> {
        Reference::all()
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(name))
            .map(|r| Self { inner: r.config() })
            .ok_or_else(|| PyValueError::new_err(format!("unknown reference problem {name:?}")))
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.model.gamma
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.model.sigma
    }

    /// Sets `spectral.n_q` and `spectral.n_p`.
    fn with_grid(&self, n_q: usize, n_p: usize) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.spectral.n_q = n_q;
        inner.spectral.n_p = n_p;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("Config(gamma={}, sigma={}, seed={})", self.inner.model.gamma, self.inner.model.sigma, self.inner.seed)
    }
}

/// Principal eigenpair on a phase-space grid; node `k` sits at `(q[k], p[k])`.
#[pyclass(name = "EigenPair", get_all)]
struct PyEigenPair {
    lambda0: f64,
    lambda0_adjoint: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    q: Vec<f64>,
    p: Vec<f64>,
    residual_phi: f64,
    residual_psi: f64,
}

#[pyclass(name = "FvResult", get_all)]
struct PyFvResult {
    q: Vec<f64>,
    p: Vec<f64>,
    branching_rate: f64,
    half_width: f64,
}

#[pyclass(name = "ExitLaw", get_all)]
struct PyExitLaw {
    exit_times: Vec<f64>,
    sides: Vec<usize>,
    normal_momenta: Vec<f64>,
    censored: usize,
}

impl From<ExitLaw> for PyExitLaw {
    fn from(law: ExitLaw) -> Self {
        Self { exit_times: law.exit_times, sides: law.sides, normal_momenta: law.normal_momenta, censored: law.censored }
    }
}

#[pyclass(name = "CheckReport", get_all)]
struct PyCheckReport {
    name: String,
    status: String,
    failures: Vec<String>,
    /// The full report as JSON.
    json: String,
}

fn first_coordinates(points: &[PhasePoint]) -> (Vec<f64>, Vec<f64>) {
    points.iter().map(|x| (x.q()[0], x.p()[0])).unzip()
}

/// Survival curve `(t, P(tau > t), standard error)` from a point start.
#[pyfunction]
#[pyo3(signature = (config, q, p, samples=10_000, points=100))]
fn survival(py: Python<'_>, config: &PyConfig, q: Vec<f64>, p: Vec<f64>, samples: usize, points: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let c = &config.inner;
    let x0 = PhasePoint::new(&q, &p).map_err(py_err)?;
    py.detach(|| {
        let prop = Propagator::new(&c.trajectory()?, &c.params()?, &c.position_domain()?)?;
        let records = run_batch(|_| Ok(x0), samples, &prop, c.seed)?;
        let times: Vec<f64> = (0..=points).map(|k| c.integrator.t_max * k as f64 / points.max(1) as f64).collect();
        Ok(survival_curve(&records, &times))
    })
    .map_err(py_err)
}

#[pyfunction]
fn spectral(py: Python<'_>, config: &PyConfig) -> PyResult<PyEigenPair> {
    let c = &config.inner;
    py.detach(|| {
        let grid = c.main_grid()?;
        let (_, _, pair) = solve_grid(&grid, &c.params()?)?;
        let (q, p) = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.coords(k);
                (grid.q(i), grid.p(j))
            })
            .unzip();
        Ok(PyEigenPair {
            lambda0: pair.lambda0,
            lambda0_adjoint: pair.lambda0_adjoint,
            phi: pair.phi_vec,
            psi: pair.psi_vec,
            q,
            p,
            residual_phi: pair.residual_phi,
            residual_psi: pair.residual_psi,
        })
    })
    .map_err(py_err)
}

/// Richardson-extrapolated decay rate over `spectral.levels` grids.
#[pyfunction]
fn lambda0(py: Python<'_>, config: &PyConfig) -> PyResult<f64> {
    let c = &config.inner;
    let s = &c.spectral;
    py.detach(|| {
        let base = c.grid(s.n_q >> (s.levels - 1), s.n_p >> (s.levels - 1))?;
        Ok(richardson(&base, &c.params()?, s.levels)?.best())
    })
    .map_err(py_err)
}

/// Fleming-Viot run from a uniform start; returns the final snapshot.
#[pyfunction]
fn fleming_viot(py: Python<'_>, config: &PyConfig) -> PyResult<PyFvResult> {
    let c = &config.inner;
    py.detach(|| {
        let domain = c.position_domain()?;
        let params = c.params()?;
        let start = QsdSampler::Uniform { domain: domain.clone(), p_max: params.sigma };
        let mut ens = ParticleEnsemble::from_sampler(&start, c.fv.particles, &domain, c.seed)?;
        kinetic_qsd::fv_evolve(&mut ens, c.fv.burnin + c.fv.horizon, &c.trajectory()?, &params, &domain)?;
        let (branching_rate, half_width) = ens.branching_rate(c.fv.burnin, c.fv.batches)?;
        let (q, p) = first_coordinates(&ens.particles);
        Ok(PyFvResult { q, p, branching_rate, half_width })
    })
    .map_err(py_err)
}

/// Exits from pooled Fleming-Viot snapshots.
#[pyfunction]
#[pyo3(signature = (config, samples=10_000))]
fn exit_law(py: Python<'_>, config: &PyConfig, samples: usize) -> PyResult<PyExitLaw> {
    let c = &config.inner;
    py.detach(|| {
        let pool = kinetic_qsd::verify::qsd_pool(c, c.seed, 20)?;
        let law = kinetic_qsd::exit_law(
            &pool.sampler(),
            samples,
            &c.trajectory()?,
            &c.params()?,
            &c.position_domain()?,
            c.seed.wrapping_add(1),
            c.p_max()?,
            c.verify.exit_p_bins,
        )?;
        Ok(PyExitLaw::from(law))
    })
    .map_err(py_err)
}

/// Runs a verification suite ("all", "duality", "bound", "qsd", "exit", "longtime").
#[pyfunction]
#[pyo3(signature = (config, suite="longtime"))]
fn verify(py: Python<'_>, config: &PyConfig, suite: &str) -> PyResult<Vec<PyCheckReport>> {
    let suite: Suite = suite.parse().map_err(py_err)?;
    let c = &config.inner;
    let reports = py.detach(|| kinetic_qsd::run_suite(c, suite)).map_err(py_err)?;
    reports
        .iter()
        .map(|r| {
            let json = kinetic_qsd::io::finite_value(r, "report").map_err(py_err)?.to_string();
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            Ok(PyCheckReport { name: r.name.clone(), status, failures: r.failures().into_iter().map(String::from).collect(), json })
        })
        .collect()
}

#[pymodule]
fn kinetic_qsd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEigenPair>()?;
    m.add_class::<PyFvResult>()?;
    m.add_class::<PyExitLaw>()?;
    m.add_class::<PyCheckReport>()?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    m.add_function(wrap_pyfunction!(spectral, m)?)?;
    m.add_function(wrap_pyfunction!(lambda0, m)?)?;
    m.add_function(wrap_pyfunction!(fleming_viot, m)?)?;
    m.add_function(wrap_pyfunction!(exit_law, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
