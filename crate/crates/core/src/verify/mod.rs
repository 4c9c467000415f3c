//! Cross-module numerical checks of the absorbed kinetic Langevin theory.
//!
//! Each check reads everything it needs from a [`RunConfig`], derives its own
//! seeds from `config.seed` and a fixed label, and returns a [`CheckReport`].

mod bound;
mod duality;
mod exit;
mod lambda;
mod longtime;
mod qsd;
mod shared;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::{RunConfig, Suite};
use crate::error::Result;

pub use bound::check_gaussian_bound;
pub use duality::{check_duality_mc, check_duality_spectral};
pub use exit::check_exit_law;
pub use lambda::check_lambda0_agreement;
pub use longtime::check_longtime;
pub use qsd::{check_qsd_fixed_point, check_tv_convergence};
pub use shared::{qsd_pool, QsdPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Informational,
}

/// One compared quantity. Informational assertions never fail a check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub status: Status,
    pub assertions: Vec<Assertion>,
    pub measured: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub config: RunConfig,
    pub seed: u64,
    pub elapsed_s: f64,
}

impl CheckReport {
    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    /// Names of failed non-informational assertions.
    pub fn failures(&self) -> Vec<&str> {
        self.assertions.iter().filter(|a| !a.passed && !a.informational).map(|a| a.name.as_str()).collect()
    }

    pub fn value(&self, key: &str) -> Option<&Value> {
        self.measured.get(key)
    }
}

pub(crate) struct ReportBuilder {
    report: CheckReport,
    informational: bool,
    start: Instant,
}

impl ReportBuilder {
    pub(crate) fn new(name: &str, config: &RunConfig, seed: u64) -> Self {
        Self {
            report: CheckReport {
                name: name.to_string(),
                status: Status::Pass,
                assertions: Vec::new(),
                measured: BTreeMap::new(),
                tolerances: BTreeMap::new(),
                notes: Vec::new(),
                config: config.clone(),
                seed,
                elapsed_s: 0.0,
            },
            informational: false,
            start: Instant::now(),
        }
    }

    /// Marks the whole check informational: the status is `informational`
    /// unless a non-informational assertion fails.
    pub(crate) fn informational(mut self) -> Self {
        self.informational = true;
        self
    }

    fn push(&mut self, name: &str, passed: bool, measured: f64, tolerance: f64, informational: bool) {
        self.report.tolerances.insert(name.to_string(), tolerance);
        self.report.assertions.push(Assertion { name: name.to_string(), passed, measured, tolerance, informational });
    }

    pub(crate) fn at_most(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.push(name, measured <= tolerance, measured, tolerance, false);
    }

    pub(crate) fn at_least(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.push(name, measured >= tolerance, measured, tolerance, false);
    }

    /// Boolean outcome; `measured` and `tolerance` are recorded for context.
    pub(crate) fn holds(&mut self, name: &str, passed: bool, measured: f64, tolerance: f64) {
        self.push(name, passed, measured, tolerance, false);
    }

    pub(crate) fn info(&mut self, name: &str, passed: bool, measured: f64, tolerance: f64) {
        self.push(name, passed, measured, tolerance, true);
    }

    pub(crate) fn measure(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.report.measured.insert(key.to_string(), v);
    }

    pub(crate) fn note(&mut self, note: impl Into<String>) {
        self.report.notes.push(note.into());
    }

    pub(crate) fn finish(mut self) -> CheckReport {
        let failed = self.report.assertions.iter().any(|a| !a.passed && !a.informational);
        self.report.status = match (failed, self.informational) {
            (true, _) => Status::Fail,
            (false, true) => Status::Informational,
            (false, false) => Status::Pass,
        };
        self.report.elapsed_s = self.start.elapsed().as_secs_f64();
        self.report
    }
}

/// Runs the checks of `suite` in a fixed order.
pub fn run_suite(config: &RunConfig, suite: Suite) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Duality) {
        out.push(check_duality_spectral(config)?);
        out.push(check_duality_mc(config)?);
    }
    if matches!(suite, Suite::All | Suite::Bound) {
        out.push(check_gaussian_bound(config)?);
    }
    if matches!(suite, Suite::All | Suite::Qsd) {
        out.push(check_lambda0_agreement(config)?);
        out.push(check_qsd_fixed_point(config)?);
        out.push(check_tv_convergence(config)?);
    }
    if matches!(suite, Suite::All | Suite::Exit) {
        out.push(check_exit_law(config)?);
    }
    if matches!(suite, Suite::All | Suite::Longtime) {
        out.push(check_longtime(config)?);
    }
    Ok(out)
}

/// True when no report has a non-informational failure.
pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.status != Status::Fail)
}
