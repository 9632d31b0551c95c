//! Mean-field spectral dynamics on the line.
//!
//! The crate simulates Dyson-type interacting particle systems, solves the
//! limiting nonlocal transport equation in density and CDF form, and checks
//! the identities and bounds satisfied by its solutions.
//!
//! Convention: `H[m](x) = p.v. ∫ m(y)/(x - y) dy` without a `1/π` factor, so
//! the half-Laplacian `A0 = d/dx H` has Fourier symbol `π|ξ|` and the pure
//! flow from a point mass is the semicircle of radius `2√t`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytic;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod particle;
pub mod pde;
pub mod toeplitz;

pub use error::{LabError, Result};
pub use grid::{cdf_to_density, density_to_cdf, CdfGrid, ExteriorMass, Grid, GridDensity, GridField, ParticleEnsemble};
