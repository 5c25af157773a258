//! NV charge-state fraction from PL spectra: non-negative decomposition
//! onto NV⁻ and NV⁰ basis spectra, then brightness-corrected weights.
//!
//! The brightness correction uses a single NV⁰/NV⁻ ratio (default 2.5),
//! a simplification of two-step spectral methods.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// NV⁻ PL per center relative to NV⁰.
pub const DEFAULT_BRIGHTNESS_RATIO: f64 = 2.5;
/// Intensities above this (mW/µm²) fall outside the regime where the
/// spectral decomposition was validated.
pub const VALIDATED_INTENSITY_MAX: f64 = 0.1;
const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelength_nm: Vec<f64>,
    pub counts: Vec<f64>,
    pub longpass_nm: f64,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let s = Spectrum {
            wavelength_nm,
            counts,
            longpass_nm: 550.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelength_nm.len() != self.counts.len() {
            return Err(Error::invalid(
                "wavelength and counts columns differ in length",
            ));
        }
        if self.wavelength_nm.len() < 2 {
            return Err(Error::invalid("spectrum needs >= 2 samples"));
        }
        if self
            .wavelength_nm
            .iter()
            .chain(&self.counts)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("spectrum contains non-finite values"));
        }
        if let Some(i) = self.wavelength_nm.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "wavelengths not strictly increasing at sample {}",
                i + 2
            )));
        }
        Ok(())
    }

    fn support(&self) -> (f64, f64) {
        (
            self.wavelength_nm[0],
            self.wavelength_nm[self.wavelength_nm.len() - 1],
        )
    }

    /// Mean sample spacing, nm.
    fn spacing(&self) -> f64 {
        let (a, b) = self.support();
        (b - a) / (self.wavelength_nm.len() - 1) as f64
    }

    /// Linear interpolation at `x` inside the support.
    fn at(&self, x: f64) -> f64 {
        let w = &self.wavelength_nm;
        let k = w.partition_point(|&v| v < x);
        if k == 0 {
            return self.counts[0];
        }
        if k == w.len() {
            return self.counts[w.len() - 1];
        }
        if w[k] == x {
            return self.counts[k];
        }
        let t = (x - w[k - 1]) / (w[k] - w[k - 1]);
        self.counts[k - 1] + t * (self.counts[k] - self.counts[k - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChargeDecomposition {
    pub w_minus: f64,
    pub w_zero: f64,
    pub psi: f64,
    pub residual_rms: f64,
    /// Residual norm relative to the measured spectrum norm.
    pub relative_residual: f64,
    pub brightness_ratio: f64,
    /// Set when the excitation intensity is above the validated regime.
    pub outside_validated_regime: bool,
}

/// `ψ = w₋/(w₋ + r·w₀)` with NV⁻ brightness normalized to one and NV⁰ to
/// `1/r`.
pub fn charge_fraction(w_minus: f64, w_zero: f64, brightness_ratio: f64) -> Result<f64> {
    if !(w_minus >= 0.0 && w_zero >= 0.0 && w_minus.is_finite() && w_zero.is_finite()) {
        return Err(Error::invalid(format!(
            "PL weights must be finite and >= 0, got ({w_minus}, {w_zero})"
        )));
    }
    if !(brightness_ratio.is_finite() && brightness_ratio > 0.0) {
        return Err(Error::invalid(format!(
            "brightness ratio must be > 0, got {brightness_ratio}"
        )));
    }
    if w_minus == 0.0 && w_zero == 0.0 {
        return Err(Error::invalid(
            "both PL weights are zero; charge fraction undefined",
        ));
    }
    Ok(w_minus / (w_minus + brightness_ratio * w_zero))
}

/// Resamples all three spectra onto the coarsest grid restricted to their
/// common support.
fn common_grid(spectra: [&Spectrum; 3]) -> Result<Vec<f64>> {
    let lo = spectra
        .iter()
        .map(|s| s.support().0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = spectra
        .iter()
        .map(|s| s.support().1)
        .fold(f64::INFINITY, f64::min);
    if !(lo < hi) {
        return Err(Error::invalid("spectra do not overlap in wavelength"));
    }
    let coarsest = spectra
        .iter()
        .max_by(|a, b| a.spacing().total_cmp(&b.spacing()))
        .expect("three spectra");
    let grid: Vec<f64> = coarsest
        .wavelength_nm
        .iter()
        .copied()
        .filter(|&x| x >= lo && x <= hi)
        .collect();
    if grid.len() < 2 {
        return Err(Error::invalid(
            "overlap of the spectra holds fewer than 2 samples",
        ));
    }
    Ok(grid)
}

/// Non-negative least squares `measured ≈ w₋·basis₋ + w₀·basis₀` on the
/// common grid, and the resulting charge fraction.
pub fn decompose(
    measured: &Spectrum,
    basis_minus: &Spectrum,
    basis_zero: &Spectrum,
    brightness_ratio: f64,
    intensity_mw_um2: Option<f64>,
) -> Result<ChargeDecomposition> {
    for s in [measured, basis_minus, basis_zero] {
        s.validate()?;
    }
    let grid = common_grid([measured, basis_minus, basis_zero])?;
    let y: Vec<f64> = grid.iter().map(|&x| measured.at(x)).collect();
    let a: Vec<f64> = grid.iter().map(|&x| basis_minus.at(x)).collect();
    let b: Vec<f64> = grid.iter().map(|&x| basis_zero.at(x)).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();

    let gram = Matrix2::new(dot(&a, &a), dot(&a, &b), dot(&a, &b), dot(&b, &b));
    let sv = gram.singular_values();
    // cond(basis) = √cond(Gram)
    let cond = (sv.max() / sv.min()).sqrt();
    if !(cond.is_finite() && cond <= MAX_CONDITION) {
        return Err(Error::computation(format!(
            "basis spectra are collinear (condition number {cond:.3e})"
        )));
    }
    let rhs = Vector2::new(dot(&a, &y), dot(&b, &y));
    // two-variable active set: unconstrained, else the better single basis
    let (mut wm, mut wz) = match gram.lu().solve(&rhs) {
        Some(w) => (w[0], w[1]),
        None => return Err(Error::computation("basis Gram matrix is singular")),
    };
    if wm < 0.0 || wz < 0.0 {
        let only_minus = (rhs[0] / gram[(0, 0)]).max(0.0);
        let only_zero = (rhs[1] / gram[(1, 1)]).max(0.0);
        let ssr = |p: f64, q: f64| {
            y.iter()
                .zip(&a)
                .zip(&b)
                .map(|((yi, ai), bi)| (yi - p * ai - q * bi).powi(2))
                .sum::<f64>()
        };
        if ssr(only_minus, 0.0) <= ssr(0.0, only_zero) {
            (wm, wz) = (only_minus, 0.0);
        } else {
            (wm, wz) = (0.0, only_zero);
        }
    }
    let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - wm * a[i] - wz * b[i]).collect();
    let rnorm = dot(&resid, &resid).sqrt();
    let ynorm = dot(&y, &y).sqrt();
    Ok(ChargeDecomposition {
        w_minus: wm,
        w_zero: wz,
        psi: charge_fraction(wm, wz, brightness_ratio)?,
        residual_rms: rnorm / (y.len() as f64).sqrt(),
        relative_residual: if ynorm > 0.0 { rnorm / ynorm } else { 0.0 },
        brightness_ratio,
        outside_validated_regime: intensity_mw_um2.is_some_and(|i| i > VALIDATED_INTENSITY_MAX),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(center: f64, width: f64) -> impl Fn(f64) -> f64 {
        move |x| (-((x - center) / width).powi(2) / 2.0).exp()
    }

    fn bases() -> (Spectrum, Spectrum) {
        let grid: Vec<f64> = (0..300).map(|i| 550.0 + i as f64).collect();
        // NV⁻ broad band with a 637 nm zero-phonon line; NV⁰ bluer
        let m = |x: f64| gaussian(690.0, 40.0)(x) + 0.2 * gaussian(637.0, 1.5)(x);
        let z = |x: f64| gaussian(620.0, 35.0)(x) + 0.2 * gaussian(575.0, 1.5)(x);
        (
            Spectrum::new(grid.clone(), grid.iter().map(|&x| m(x)).collect()).unwrap(),
            Spectrum::new(grid.clone(), grid.iter().map(|&x| z(x)).collect()).unwrap(),
        )
    }

    fn mix(bm: &Spectrum, bz: &Spectrum, p: f64, q: f64) -> Spectrum {
        let c = bm
            .counts
            .iter()
            .zip(&bz.counts)
            .map(|(a, b)| p * a + q * b)
            .collect();
        Spectrum::new(bm.wavelength_nm.clone(), c).unwrap()
    }

    #[test]
    fn fraction_examples() {
        assert_eq!(charge_fraction(0.4, 0.0, 2.5).unwrap(), 1.0);
        assert!((charge_fraction(1.0, 1.0, 2.5).unwrap() - 1.0 / 3.5).abs() < 1e-15);
        assert!((charge_fraction(0.3, 0.6, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(charge_fraction(0.0, 0.0, 2.5).is_err());
    }

    #[test]
    fn exact_mixture_round_trips() {
        let (bm, bz) = bases();
        let d = decompose(&mix(&bm, &bz, 0.7, 0.3), &bm, &bz, 2.5, None).unwrap();
        assert!((d.w_minus - 0.7).abs() < 1e-9 && (d.w_zero - 0.3).abs() < 1e-9);
        assert!(d.relative_residual <= 1e-12);
    }

    #[test]
    fn pure_basis_has_no_other_component() {
        let (bm, bz) = bases();
        let d = decompose(&bm, &bm, &bz, 2.5, None).unwrap();
        assert!(d.w_zero.abs() < 1e-12);
        assert!((d.psi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_solution_is_clamped() {
        let (bm, bz) = bases();
        // more than pure NV⁻ in the red: the free optimum has w₀ < 0
        let c = bm
            .counts
            .iter()
            .zip(&bz.counts)
            .map(|(a, b)| a - 0.05 * b)
            .collect();
        let m = Spectrum::new(bm.wavelength_nm.clone(), c).unwrap();
        let d = decompose(&m, &bm, &bz, 2.5, None).unwrap();
        assert_eq!(d.w_zero, 0.0);
        assert!(d.w_minus > 0.0);
    }

    #[test]
    fn noisy_weights_within_two_percent() {
        let (bm, bz) = bases();
        let clean = mix(&bm, &bz, 0.7, 0.3);
        let peak = clean.counts.iter().copied().fold(0.0, f64::max);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.01 * peak).unwrap();
            let c = clean
                .counts
                .iter()
                .map(|v| v + noise.sample(&mut rng))
                .collect();
            let m = Spectrum::new(clean.wavelength_nm.clone(), c).unwrap();
            let d = decompose(&m, &bm, &bz, 2.5, None).unwrap();
            assert!((d.w_minus / 0.7 - 1.0).abs() < 0.02, "seed {seed}: {d:?}");
            assert!((d.w_zero / 0.3 - 1.0).abs() < 0.02, "seed {seed}: {d:?}");
        }
    }

    #[test]
    fn resamples_to_the_coarser_grid() {
        let (bm, bz) = bases();
        let fine: Vec<f64> = (0..1200).map(|i| 560.0 + 0.2 * i as f64).collect();
        let interp = |s: &Spectrum, x: f64| s.at(x);
        let c = fine
            .iter()
            .map(|&x| 0.5 * interp(&bm, x) + 0.5 * interp(&bz, x))
            .collect();
        let m = Spectrum::new(fine, c).unwrap();
        let d = decompose(&m, &bm, &bz, 2.5, None).unwrap();
        assert!((d.w_minus - 0.5).abs() < 1e-9 && (d.w_zero - 0.5).abs() < 1e-9);
    }

    #[test]
    fn errors_on_disjoint_or_collinear_bases() {
        let (bm, bz) = bases();
        let shifted = Spectrum::new(
            bm.wavelength_nm.iter().map(|x| x + 1000.0).collect(),
            bm.counts.clone(),
        )
        .unwrap();
        assert!(decompose(&shifted, &bm, &bz, 2.5, None).is_err());
        let twin = Spectrum::new(
            bm.wavelength_nm.clone(),
            bm.counts.iter().map(|c| 2.0 * c).collect(),
        )
        .unwrap();
        let err = decompose(&bm, &bm, &twin, 2.5, None).unwrap_err();
        assert!(err.to_string().contains("collinear"), "{err}");
    }

    #[test]
    fn flags_high_intensity() {
        let (bm, bz) = bases();
        let m = mix(&bm, &bz, 0.5, 0.5);
        assert!(
            !decompose(&m, &bm, &bz, 2.5, Some(0.05))
                .unwrap()
                .outside_validated_regime
        );
        assert!(
            decompose(&m, &bm, &bz, 2.5, Some(0.5))
                .unwrap()
                .outside_validated_regime
        );
    }

    proptest! {
        #[test]
        fn scale_invariance(k in 0.01f64..100.0, p in 0.0f64..1.0) {
            let (bm, bz) = bases();
            let m = mix(&bm, &bz, p, 1.0 - p);
            let a = decompose(&m, &bm, &bz, 2.5, None).unwrap();
            let mk = Spectrum { counts: m.counts.iter().map(|c| c * k).collect(), ..m.clone() };
            let b = decompose(&mk, &bm, &bz, 2.5, None).unwrap();
            prop_assert!((b.w_minus - k * a.w_minus).abs() <= 1e-9 * k);
            prop_assert!((b.psi - a.psi).abs() < 1e-9);
        }

        #[test]
        fn psi_monotone_in_weights(wm in 0.01f64..10.0, wz in 0.01f64..10.0, d in 0.001f64..1.0) {
            let base = charge_fraction(wm, wz, 2.5).unwrap();
            prop_assert!(charge_fraction(wm + d, wz, 2.5).unwrap() > base);
            prop_assert!(charge_fraction(wm, wz + d, 2.5).unwrap() < base);
        }
    }
}
