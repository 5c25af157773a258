//! The simplified sensitivity metric `η̃ ∝ (N·T₂*)^(-1/2)` with the
//! overhead duty-cycle correction, and the nitrogen concentration that
//! minimizes it.

use serde::Serialize;

use crate::dephasing::BathCoefficients;
use crate::error::{Error, Result};
use crate::optimize::{minimize_log, Boundary};
use crate::units::Concentration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricConfig {
    /// Residual ¹³C; 50 ppm corresponds to 99.995 % ¹²C.
    pub c13: Concentration,
    pub t_overhead: f64,
    pub bath: BathCoefficients,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            c13: Concentration::ppm(50.0).expect("constant"),
            t_overhead: 10.0,
            bath: BathCoefficients::default(),
        }
    }
}

fn bath_t2(ns0: f64, cfg: &MetricConfig) -> f64 {
    1.0 / (cfg.bath.a_ns0 * ns0 + cfg.bath.a_c13 * cfg.c13.value())
}

/// `η̃(N) = √((T₂* + t_O)/(N T₂*²))` with spin-bath T₂* from the nitrogen
/// and ¹³C terms. Only ratios of this quantity are meaningful.
pub fn simplified_metric(ns0: Concentration, cfg: &MetricConfig) -> Result<f64> {
    let n = ns0.value();
    if n <= 0.0 {
        return Err(Error::invalid("simplified metric needs [N] > 0"));
    }
    cfg.bath.validate()?;
    if !(cfg.t_overhead.is_finite() && cfg.t_overhead >= 0.0) {
        return Err(Error::invalid(format!(
            "overhead time must be >= 0, got {}",
            cfg.t_overhead
        )));
    }
    let t2 = bath_t2(n, cfg);
    Ok(((t2 + cfg.t_overhead) / (n * t2 * t2)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NitrogenOptimum {
    pub ns0_ppm: f64,
    pub metric: f64,
    /// `Some` when the metric is monotone on the search range and the
    /// optimum is its edge (no interior optimum).
    pub boundary: Option<Boundary>,
}

pub const NITROGEN_SEARCH_PPM: (f64, f64) = (0.01, 100.0);

/// Nitrogen concentration in [0.01, 100] ppm minimizing the simplified
/// metric at the given overhead time.
pub fn optimal_nitrogen(t_overhead: f64, cfg: &MetricConfig) -> Result<NitrogenOptimum> {
    if !(t_overhead.is_finite() && t_overhead >= 0.0) {
        return Err(Error::invalid(format!(
            "overhead time must be >= 0, got {t_overhead}"
        )));
    }
    let cfg = MetricConfig { t_overhead, ..*cfg };
    let objective = |n: f64| {
        Concentration::ppm(n)
            .and_then(|c| simplified_metric(c, &cfg))
            .map(f64::ln)
            .unwrap_or(f64::NAN)
    };
    let (lo, hi) = NITROGEN_SEARCH_PPM;
    let m = minimize_log(objective, lo, hi, 1e-6)?;
    Ok(NitrogenOptimum {
        ns0_ppm: m.x,
        metric: m.value.exp(),
        boundary: m.boundary,
    })
}
