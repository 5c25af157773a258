//! Photon-shot-noise-limited Ramsey sensitivity and the trade studies built
//! on it.
//!
//! ```text
//! η = 1/(Δmₛ γₑ) · 1/√(Nτ) · exp((τ/T₂*)ᵖ) · √(1 + 1/(C² n_avg)) · √((τ + t_O)/τ)
//! ```
//!
//! The evaluation is unit-agnostic: callers choose consistent units for γₑ,
//! N, τ, T₂* and t_O. [`volume`] fixes SI units for sample comparisons.

mod metric;
mod table;
mod volume;

pub use metric::{optimal_nitrogen, simplified_metric, MetricConfig, NitrogenOptimum};
pub use table::{IntensityRow, IntensityTable};
pub use volume::{
    sensitivity_ratio, volume_normalized_sensitivity, PhotonModel, Protocol, SensorSetup,
    TauPolicy, VolumeSensitivity,
};

use crate::error::{Error, Result};
use crate::optimize::{minimize_log, Boundary};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SensingParams {
    /// 1 for single-quantum, 2 for double-quantum Ramsey.
    pub delta_ms: u8,
    pub gamma_e: f64,
    pub n_sensors: f64,
    pub tau: f64,
    /// May be `f64::INFINITY` for a dephasing-free reference.
    pub t2_star: f64,
    pub p: f64,
    pub contrast: f64,
    /// Detected photons per NV⁻ per readout; `f64::INFINITY` removes the
    /// readout-noise penalty.
    pub n_avg: f64,
    pub t_overhead: f64,
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.delta_ms, 1 | 2) {
            return Err(Error::invalid(format!(
                "delta_ms must be 1 or 2, got {}",
                self.delta_ms
            )));
        }
        let positive = [
            ("gamma_e", self.gamma_e),
            ("n_sensors", self.n_sensors),
            ("tau", self.tau),
            ("t2_star", self.t2_star),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.gamma_e.is_finite() || !self.n_sensors.is_finite() || !self.tau.is_finite() {
            return Err(Error::invalid("gamma_e, n_sensors and tau must be finite"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::invalid(format!(
                "stretch exponent p must be >= 1, got {}",
                self.p
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::invalid(format!(
                "contrast must lie in (0,1], got {}",
                self.contrast
            )));
        }
        if self.n_avg.is_nan() || self.n_avg < 0.0 {
            return Err(Error::invalid(format!(
                "n_avg must be >= 0, got {}",
                self.n_avg
            )));
        }
        if !(self.t_overhead.is_finite() && self.t_overhead >= 0.0) {
            return Err(Error::invalid(format!(
                "overhead time must be finite and >= 0, got {}",
                self.t_overhead
            )));
        }
        Ok(())
    }
}

/// ln η, which stays finite where η itself would overflow.
fn ln_eta(p: &SensingParams, tau: f64) -> f64 {
    let readout = 1.0 + 1.0 / (p.contrast * p.contrast * p.n_avg);
    -(f64::from(p.delta_ms) * p.gamma_e).ln() - 0.5 * (p.n_sensors * tau).ln()
        + (tau / p.t2_star).powf(p.p)
        + 0.5 * readout.ln()
        + 0.5 * ((tau + p.t_overhead) / tau).ln()
}

/// Shot-noise-limited Ramsey sensitivity, evaluated term by term.
pub fn ramsey_sensitivity(params: &SensingParams) -> Result<f64> {
    params.validate()?;
    if params.n_avg == 0.0 {
        return Err(Error::invalid(
            "readout noise term undefined: n_avg = 0 with finite contrast",
        ));
    }
    let p = params;
    let prefactor = 1.0 / (f64::from(p.delta_ms) * p.gamma_e);
    let projection = 1.0 / (p.n_sensors * p.tau).sqrt();
    let decay = ((p.tau / p.t2_star).powf(p.p)).exp();
    let readout = (1.0 + 1.0 / (p.contrast * p.contrast * p.n_avg)).sqrt();
    let duty = ((p.tau + p.t_overhead) / p.tau).sqrt();
    Ok(prefactor * projection * decay * readout * duty)
}

/// Search interval for the free-precession time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauDomain {
    pub lower: f64,
    pub upper: f64,
}

impl TauDomain {
    /// `[T₂*/10⁴, 5 T₂*]`; requires finite T₂*.
    pub fn for_t2(t2_star: f64) -> Result<Self> {
        if !t2_star.is_finite() {
            return Err(Error::invalid(
                "T2* is unbounded: supply an explicit free-precession domain",
            ));
        }
        Ok(TauDomain {
            lower: 1e-4 * t2_star,
            upper: 5.0 * t2_star,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TauOptimum {
    pub tau: f64,
    pub eta: f64,
    /// Set when the optimum sits on the edge of the search domain.
    pub boundary: Option<Boundary>,
}

/// Free-precession time minimizing η (the `tau` field of `params` is
/// ignored). Searches `domain`, or `(0, 5T₂*]` when `None`.
pub fn optimal_tau(params: &SensingParams, domain: Option<TauDomain>) -> Result<TauOptimum> {
    let mut probe = *params;
    let domain = match domain {
        Some(d) => d,
        None => TauDomain::for_t2(params.t2_star)?,
    };
    probe.tau = domain.upper;
    probe.validate()?;
    if probe.n_avg == 0.0 {
        return Err(Error::invalid(
            "readout noise term undefined: n_avg = 0 with finite contrast",
        ));
    }
    let m = minimize_log(|tau| ln_eta(&probe, tau), domain.lower, domain.upper, 1e-8)?;
    probe.tau = m.x;
    Ok(TauOptimum {
        tau: m.x,
        eta: ramsey_sensitivity(&probe)?,
        boundary: m.boundary,
    })
}
