//! Modeling and analysis toolkit for NV-ensemble DC magnetometry.
//!
//! - [`dephasing`]: T₂* budgets from spin-bath, strain and bias terms
//! - [`sensitivity`]: shot-noise-limited Ramsey sensitivity and trade studies
//! - [`photophysics`]: five-level rate-equation model of spin initialization
//! - [`ramsey`]: synthesis and fitting of Ramsey free-induction decays
//! - [`strainmap`]: strain-map statistics and sensor-size scaling
//! - [`charge`]: NV charge-state fraction from PL spectra
//! - [`io`] and [`cli`]: configuration, file formats and the `nvsk` command

pub mod charge;
pub mod cli;
pub mod dephasing;
pub mod error;
pub mod io;
pub mod lm;
pub mod optimize;
pub mod photophysics;
pub mod ramsey;
pub mod sensitivity;
pub mod strainmap;
pub mod units;

pub use error::{Error, Result};
