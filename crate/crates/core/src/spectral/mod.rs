//! Finite-difference kinetic Fokker-Planck solver in one dimension.

pub mod banded;
pub mod eigen;
pub mod gap;
pub mod grid;
pub mod operator;
pub mod overdamped;
pub mod semigroup;

pub use eigen::{principal_eigenpair, richardson, solve_grid, EigenOptions, EigenPair, RichardsonStudy};
pub use gap::{spectral_gap, GapReport};
pub use grid::{default_p_max, Grid};
pub use operator::{build_adjoint_generator, build_generator, Convention, Csr, NodeKind, OperatorMatrix};
pub use overdamped::{overdamped_eigen, OverdampedEigen};
pub use semigroup::{duality_check, duality_residual, semigroup_matrix, spectral_radius, Semigroup};
