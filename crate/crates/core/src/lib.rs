//! Two-parameter Feller semigroup of a one-dimensional diffusion with a
//! moving membrane, built from boundary integral equations.

pub mod boundary_system;
pub mod cases;
pub mod error;
pub mod mc_oracle;
pub mod parametrix;
pub mod potentials;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod semigroup;
pub mod suites;

pub use error::{MembraneError, Result};
