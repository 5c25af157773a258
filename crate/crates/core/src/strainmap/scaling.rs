use serde::Serialize;

use super::partition::PartitionStats;
use crate::dephasing::{combine_rates, strain_rate_from_fwhm};
use crate::error::{Error, Result};

/// `y = prefactor·x^exponent` fitted by ordinary least squares on
/// `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Standard error of the exponent.
    pub exponent_sigma: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::invalid("power-law fit needs >= 3 matching points"));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("power-law fit needs positive finite data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid(
            "power-law fit needs at least two distinct x values",
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(PowerLawFit {
        exponent: slope,
        exponent_sigma: (ssr / (n - 2.0) / sxx).sqrt(),
        prefactor: intercept.exp(),
        r_squared: if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub sensor_size_um: f64,
    pub median_fwhm_khz: f64,
    pub t2_eff_us: f64,
    /// `(T₂*eff·L)⁻¹`, µs⁻¹µm⁻¹.
    pub metric: f64,
    /// Metric at the 75th and 25th percentile widths, when available.
    pub metric_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    pub fit: PowerLawFit,
}

/// Effective dephasing time combining `other_rate` (µs⁻¹) with the strain
/// rate of a linewidth.
fn t2_eff(other_rate: f64, fwhm: f64) -> Result<f64> {
    combine_rates(&[other_rate, strain_rate_from_fwhm(fwhm)?])?
        .finite()
        .ok_or_else(|| Error::computation("dephasing time is unbounded (all rates zero)"))
}

/// Sensitivity metric `(T₂*eff(L)·L)⁻¹` from the median linewidth at each
/// size, and its power-law exponent in `L`.
pub fn scaling_metric(stats: &[PartitionStats], other_rate: f64) -> Result<ScalingResult> {
    if stats.len() < 3 {
        return Err(Error::invalid(format!(
            "scaling fit needs >= 3 sensor sizes, got {}",
            stats.len()
        )));
    }
    if !(other_rate.is_finite() && other_rate >= 0.0) {
        return Err(Error::invalid(format!(
            "other dephasing rate must be >= 0, got {other_rate}"
        )));
    }
    let points = stats
        .iter()
        .map(|s| {
            let l = s.sensor_size_um;
            let t2 = t2_eff(other_rate, s.median)?;
            let metric_band = match s.quantiles {
                Some(q) => Some((
                    1.0 / (t2_eff(other_rate, q.p75)? * l),
                    1.0 / (t2_eff(other_rate, q.p25)? * l),
                )),
                None => None,
            };
            Ok(ScalingPoint {
                sensor_size_um: l,
                median_fwhm_khz: s.median,
                t2_eff_us: t2,
                metric: 1.0 / (t2 * l),
                metric_band,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.sensor_size_um).collect();
    let y: Vec<f64> = points.iter().map(|p| p.metric).collect();
    Ok(ScalingResult {
        fit: fit_power_law(&x, &y)?,
        points,
    })
}
