//! Quasi-stationary distributions of the kinetic Langevin process absorbed at
//! the boundary of a bounded position domain.
//!
//! The crate has three estimators of the quasi-stationary law and its decay
//! rate: Fleming-Viot particles ([`fleming_viot`]), a finite-difference
//! eigensolver of the kinetic Fokker-Planck operator ([`spectral`]) and
//! survival fits of plain Monte Carlo. [`verify`] cross-checks them.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod domain;
pub mod error;
pub mod fleming_viot;
pub mod gaussian;
pub mod histogram;
pub mod integrator;
pub mod io;
pub mod model;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use config::{load_config, Reference, RunConfig, Suite};
pub use domain::{BoundaryClass, DomainSpec, PhasePoint, PositionDomain};
pub use error::{Error, Result};
pub use fleming_viot::{exit_law, fv_evolve, ExitLaw, ParticleEnsemble, QsdSampler};
pub use integrator::{AbsorptionRecord, Crossing, Dynamics, Propagator, Scheme, TrajectoryConfig};
pub use model::{ForceField, ModelParams};
pub use verify::{run_suite, CheckReport, Status};
