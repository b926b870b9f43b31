//! Analysis and inverse design of reconfigurable metasurfaces through
//! dimensionality reduction.
//!
//! The crate implements the whole pipeline:
//!
//! - [`surrogate`]: a transfer-matrix forward solver producing reflectance
//!   spectra of the ribbon/GST/gold supercell (the ground-truth generator);
//! - [`materials`]: dispersion models, including Lorentz-Lorenz mixing of
//!   partially crystallized GST;
//! - [`dataset`]: seeded random design sampling, surrogate labeling, splits,
//!   and CSV/manifest persistence;
//! - [`nnet`]: a small dense network engine with backprop training;
//! - [`dr_response`]: the 200-m-200 response autoencoder;
//! - [`dr_design`]: the pseudo-encoder reducing the design space and the
//!   assembled forward model;
//! - [`inverse`]: the inverse network plus analytic search over the original
//!   design space with constraints;
//! - [`insight`]: first-layer weight analysis and the weighted-sum
//!   invariance experiment.

pub mod dataset;
pub mod dr_design;
pub mod dr_response;
pub mod error;
pub mod insight;
pub mod inverse;
pub mod materials;
pub mod nnet;
pub mod surrogate;

pub use error::{Error, Result};
pub use materials::{CrystallizationFraction, MaterialDb};
pub use surrogate::{DesignVector, ResponseSpectrum, WavelengthGrid};
