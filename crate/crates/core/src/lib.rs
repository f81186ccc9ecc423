//! Numerical laboratory for the nonlocal Cahn-Hilliard-Navier-Stokes system
//! with a singular logarithmic potential in two dimensions.

pub mod analysis;
pub mod coefficient;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod operators;
pub mod potential;
pub mod snapshot;
pub mod spectral;
pub mod steady;
pub mod stencil;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, VectorField, VectorNorms};
pub use kernel::{Kernel, KernelFamily, KernelSpec};
