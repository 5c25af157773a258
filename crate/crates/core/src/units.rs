//! Shared value types and unit conventions.
//!
//! Internal units: time in µs, frequency in MHz (so rates are µs⁻¹),
//! concentrations in ppm of carbon sites, optical intensity in mW/µm².

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Number density of carbon sites in diamond corresponding to 1 ppm, in cm⁻³.
pub const CM3_PER_PPM: f64 = 1.76e17;

/// Concentration in ppm (parts per million of carbon lattice sites).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Concentration(f64);

impl Concentration {
    pub const ZERO: Concentration = Concentration(0.0);

    pub fn ppm(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid(format!(
                "concentration must be finite and non-negative, got {value} ppm"
            )));
        }
        Ok(Concentration(value))
    }

    pub fn from_per_cm3(density: f64) -> Result<Self> {
        Self::ppm(density / CM3_PER_PPM)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn per_cm3(self) -> f64 {
        self.0 * CM3_PER_PPM
    }
}

impl fmt::Display for Concentration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ppm", self.0)
    }
}

/// Optical excitation intensity in mW/µm².
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Intensity(f64);

impl Intensity {
    pub fn mw_per_um2(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid(format!(
                "intensity must be finite and non-negative, got {value} mW/um2"
            )));
        }
        Ok(Intensity(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Saturation parameter `s = I / I_sat`.
    pub fn saturation(self, i_sat: Intensity) -> f64 {
        self.0 / i_sat.0
    }
}

/// Whether a stored gyromagnetic ratio is the cyclic value γₑ/2π (MHz/G) or
/// the angular value γₑ (Mrad s⁻¹ G⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaConvention {
    Cyclic,
    Angular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio as stored, MHz/G (or Mrad/s/G when angular).
    pub gamma_e: f64,
    pub gamma_convention: GammaConvention,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            gamma_e: 2.8024,
            gamma_convention: GammaConvention::Cyclic,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_e.is_finite() && self.gamma_e > 0.0) {
            return Err(Error::invalid(format!(
                "gamma_e must be positive, got {}",
                self.gamma_e
            )));
        }
        Ok(())
    }

    /// Angular gyromagnetic ratio in rad µs⁻¹ G⁻¹, the value entering the
    /// shot-noise sensitivity prefactor.
    pub fn angular_gamma(&self) -> f64 {
        match self.gamma_convention {
            GammaConvention::Cyclic => std::f64::consts::TAU * self.gamma_e,
            GammaConvention::Angular => self.gamma_e,
        }
    }

    /// Angular gyromagnetic ratio in SI, rad s⁻¹ T⁻¹.
    pub fn angular_gamma_si(&self) -> f64 {
        // 1 MHz/G = 1e6 Hz / 1e-4 T
        self.angular_gamma() * 1e10
    }
}

/// Material description of one diamond sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondSample {
    /// Substitutional nitrogen before irradiation and annealing.
    pub ns0_as_grown: Concentration,
    pub c13: Concentration,
    /// Total NV concentration, both charge states.
    pub nv_total: Concentration,
    /// NV⁻ charge fraction ψ = [NV⁻]/([NV⁻]+[NV⁰]).
    pub charge_fraction_psi: f64,
    /// Number of the four NV orientations that sense (1 with a bias field
    /// along one axis).
    pub n_orientations_sensing: u8,
}

impl DiamondSample {
    pub fn new(ns0_ppm: f64, c13_ppm: f64, nv_ppm: f64, psi: f64) -> Result<Self> {
        validate_sample(DiamondSample {
            ns0_as_grown: Concentration::ppm(ns0_ppm)?,
            c13: Concentration::ppm(c13_ppm)?,
            nv_total: Concentration::ppm(nv_ppm)?,
            charge_fraction_psi: psi,
            n_orientations_sensing: 1,
        })
    }

    /// [NV⁻] = ψ·[NV].
    pub fn nv_minus(&self) -> f64 {
        self.nv_total.value() * self.charge_fraction_psi
    }

    /// Fraction of NVs aligned with the sensing axis.
    pub fn sensing_fraction(&self) -> f64 {
        f64::from(self.n_orientations_sensing) / 4.0
    }
}

/// Checks every sample invariant and returns the sample unchanged, or an
/// error naming the first violation.
pub fn validate_sample(sample: DiamondSample) -> Result<DiamondSample> {
    for (name, c) in [
        ("ns0", sample.ns0_as_grown),
        ("c13", sample.c13),
        ("nv", sample.nv_total),
    ] {
        if !c.value().is_finite() || c.value() < 0.0 {
            return Err(Error::invalid(format!(
                "{name} must be finite and non-negative"
            )));
        }
    }
    let psi = sample.charge_fraction_psi;
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::invalid(format!("psi out of [0,1]: {psi}")));
    }
    if sample.nv_total.value() > sample.ns0_as_grown.value() {
        return Err(Error::invalid(format!(
            "NV exceeds nitrogen: nv {} > ns0 {}",
            sample.nv_total, sample.ns0_as_grown
        )));
    }
    if !(1..=4).contains(&sample.n_orientations_sensing) {
        return Err(Error::invalid(format!(
            "sensing orientations must be 1..=4, got {}",
            sample.n_orientations_sensing
        )));
    }
    Ok(sample)
}
