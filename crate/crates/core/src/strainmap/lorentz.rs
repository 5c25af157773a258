use nalgebra::DMatrix;
use serde::Serialize;

use super::histogram::{quantile, BinRule, Histogram};
use super::StrainMap;
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmConfig, Residuals};

/// Least-squares Lorentzian `A/((f − f₀)² + (Δ/2)²) + offset` fitted to a
/// count-density histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzianFit {
    /// kHz
    pub center: f64,
    /// Full width at half maximum, kHz.
    pub fwhm: f64,
    pub amplitude: f64,
    /// Count density, per kHz.
    pub offset: f64,
    pub residual_rms: f64,
    pub bin_width: f64,
    pub n_samples: usize,
}

/// Histogram window half-width in units of the interquartile range.
const WINDOW_IQR: f64 = 5.0;
pub(crate) const MIN_SAMPLES: usize = 100;

/// Each bin is compared with the Lorentzian averaged over the bin, so
/// coarse bins do not broaden the fitted width.
struct BinnedLorentzian {
    edges: Vec<(f64, f64)>,
    density: Vec<f64>,
}

impl BinnedLorentzian {
    /// Bin average of the Lorentzian without offset, and its partial
    /// derivatives in (A, f₀, Δ).
    fn eval(a: f64, f0: f64, fwhm: f64, lo: f64, hi: f64) -> (f64, [f64; 3]) {
        let g = 0.5 * fwhm;
        let w = hi - lo;
        let (ua, ub) = ((lo - f0) / g, (hi - f0) / g);
        let d = ub.atan() - ua.atan();
        let (qa, qb) = (1.0 / (1.0 + ua * ua), 1.0 / (1.0 + ub * ub));
        let value = a * d / (g * w);
        let d_a = d / (g * w);
        let d_f0 = a / (g * g * w) * (qa - qb);
        let d_g = a / w * (-d / (g * g) - (ub * qb - ua * qa) / (g * g));
        (value, [d_a, d_f0, 0.5 * d_g])
    }
}

impl Residuals for BinnedLorentzian {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.density.len()
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        for (i, (&(lo, hi), &y)) in self.edges.iter().zip(&self.density).enumerate() {
            out[i] = Self::eval(x[0], x[1], x[2], lo, hi).0 + x[3] - y;
        }
    }

    fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
        for (i, &(lo, hi)) in self.edges.iter().enumerate() {
            let (_, d) = Self::eval(x[0], x[1], x[2], lo, hi);
            jac[(i, 0)] = d[0];
            jac[(i, 1)] = d[1];
            jac[(i, 2)] = d[2];
            jac[(i, 3)] = 1.0;
        }
    }

    fn project(&self, x: &mut [f64]) {
        x[2] = x[2].abs().max(1e-12);
    }
}

/// Histogram linewidth of raw samples (no mean subtraction).
pub fn fwhm_of_values(values: &[f64], rule: BinRule) -> Result<LorentzianFit> {
    if values.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "linewidth fit needs >= {MIN_SAMPLES} valid pixels, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite samples in linewidth fit"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile(&sorted, 0.5);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = rule.width(&sorted)?;
    if !(iqr > 0.0 && width > 0.0) {
        return Err(Error::computation(
            "under-resolved linewidth: samples have no spread",
        ));
    }
    let (k0, k1) = (
        ((median - WINDOW_IQR * iqr) / width).floor(),
        ((median + WINDOW_IQR * iqr) / width).floor(),
    );
    let mut hist = Histogram::build(&sorted, width, Some((k0 * width, (k1 + 1.0) * width)))?;
    hist.counts.truncate((k1 - k0 + 1.0) as usize);
    if hist.counts.len() < 5 {
        return Err(Error::computation(format!(
            "under-resolved linewidth: only {} bins across the distribution",
            hist.counts.len()
        )));
    }
    let edges: Vec<(f64, f64)> = (0..hist.counts.len()).map(|i| hist.edges(i)).collect();
    let density: Vec<f64> = hist.counts.iter().map(|&c| c as f64 / width).collect();
    let peak = density.iter().copied().fold(0.0, f64::max);
    let g0 = 0.5 * iqr;
    let problem = BinnedLorentzian { edges, density };
    let fit = levenberg_marquardt(
        &problem,
        &[peak * g0 * g0, median, iqr, 0.0],
        &LmConfig::default(),
    )?;
    let [amplitude, center, fwhm, offset] =
        [fit.params[0], fit.params[1], fit.params[2], fit.params[3]];
    if !(fwhm.is_finite() && amplitude > 0.0) {
        return Err(Error::computation("linewidth fit did not find a peak"));
    }
    if fwhm < width {
        return Err(Error::computation(format!(
            "under-resolved linewidth: fitted FWHM {fwhm:.4} below bin width {width:.4}"
        )));
    }
    Ok(LorentzianFit {
        center,
        fwhm,
        amplitude,
        offset,
        residual_rms: fit.residual_rms,
        bin_width: width,
        n_samples: values.len(),
    })
}

/// Lorentzian linewidth of the valid pixels of `map` as given.
pub fn histogram_fwhm(map: &StrainMap, rule: BinRule) -> Result<LorentzianFit> {
    fwhm_of_values(&map.valid_values(), rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Cauchy, Distribution};

    fn cauchy(n: usize, gamma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Cauchy::new(0.0, gamma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn cauchy_width_is_twice_the_scale() {
        let v = cauchy(1_000_000, 7.5, 11);
        let fit = fwhm_of_values(&v, BinRule::default()).unwrap();
        assert!((fit.fwhm / 15.0 - 1.0).abs() < 0.03, "{fit:?}");
    }

    #[test]
    fn center_matches_median_for_symmetric_data() {
        let mut v = cauchy(20_000, 3.0, 2);
        let mirrored: Vec<f64> = v.iter().map(|x| -x + 4.0).collect();
        v.iter_mut().for_each(|x| *x += 4.0);
        v.extend(mirrored);
        let fit = fwhm_of_values(&v, BinRule::default()).unwrap();
        assert!((fit.center - 4.0).abs() < fit.bin_width, "{fit:?}");
    }

    #[test]
    fn shift_and_scale() {
        let v = cauchy(50_000, 4.0, 5);
        let base = fwhm_of_values(&v, BinRule::default()).unwrap().fwhm;
        let shifted: Vec<f64> = v.iter().map(|x| x + 123.0).collect();
        let s = fwhm_of_values(&shifted, BinRule::default()).unwrap().fwhm;
        assert!((s / base - 1.0).abs() < 1e-3);
        let scaled: Vec<f64> = v.iter().map(|x| x * 2.5).collect();
        let k = fwhm_of_values(&scaled, BinRule::default()).unwrap().fwhm;
        assert!(
            (k / (2.5 * base) - 1.0).abs() < 1e-6,
            "{k} vs {}",
            2.5 * base
        );
    }

    #[test]
    fn degenerate_spread_is_under_resolved() {
        let err = fwhm_of_values(&vec![1.0; 500], BinRule::default()).unwrap_err();
        assert!(err.to_string().contains("under-resolved linewidth"));
        let mut v = vec![0.0; 400];
        v.extend(cauchy(100, 1.0, 1));
        let err = fwhm_of_values(&v, BinRule::Fixed(5.0)).unwrap_err();
        assert!(err.to_string().contains("under-resolved"), "{err}");
    }

    #[test]
    fn requires_enough_pixels() {
        assert!(fwhm_of_values(&cauchy(99, 1.0, 1), BinRule::default()).is_err());
    }
}
