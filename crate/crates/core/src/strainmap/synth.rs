use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution};
use serde::Serialize;

use super::{NvAxis, StrainMap};
use crate::error::{Error, Result};

/// Generators of synthetic strain maps with Lorentzian pixel statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SynthModel {
    /// Independent Cauchy pixels with scale `gamma_khz` (FWHM 2γ).
    Stationary { gamma_khz: f64 },
    /// A square high-strain patch at the origin covering `area_fraction`
    /// of the map, on a low-strain background.
    TwoRegion {
        gamma_low_khz: f64,
        gamma_high_khz: f64,
        area_fraction: f64,
    },
    /// A linear ramp along columns plus Cauchy noise.
    Gradient { khz_per_um: f64, gamma_khz: f64 },
}

impl SynthModel {
    pub fn default_two_region() -> Self {
        SynthModel::TwoRegion {
            gamma_low_khz: 5.0,
            gamma_high_khz: 25.0,
            area_fraction: 0.25,
        }
    }

    /// Default parameters for a model name: `stationary`, `two-region` or
    /// `gradient`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "stationary" => Ok(SynthModel::Stationary { gamma_khz: 7.5 }),
            "two-region" => Ok(SynthModel::default_two_region()),
            "gradient" => Ok(SynthModel::Gradient {
                khz_per_um: 0.5,
                gamma_khz: 0.5,
            }),
            other => Err(Error::invalid(format!(
                "unknown synthetic map model {other:?}; expected stationary, two-region or gradient"
            ))),
        }
    }
}

fn cauchy(gamma: f64) -> Result<Cauchy<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!(
            "Cauchy scale must be > 0, got {gamma}"
        )));
    }
    Cauchy::new(0.0, gamma).map_err(|e| Error::invalid(e.to_string()))
}

/// A `rows × cols` map at `pitch_um`, reproducible from `seed`.
pub fn synthesize(
    model: &SynthModel,
    rows: usize,
    cols: usize,
    pitch_um: f64,
    seed: u64,
) -> Result<StrainMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows * cols;
    let values: Vec<f64> = match *model {
        SynthModel::Stationary { gamma_khz } => {
            let d = cauchy(gamma_khz)?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        SynthModel::TwoRegion {
            gamma_low_khz,
            gamma_high_khz,
            area_fraction,
        } => {
            if !(0.0..=1.0).contains(&area_fraction) {
                return Err(Error::invalid("area fraction must lie in [0, 1]"));
            }
            let (lo, hi) = (cauchy(gamma_low_khz)?, cauchy(gamma_high_khz)?);
            let side_r = (rows as f64 * area_fraction.sqrt()).round() as usize;
            let side_c = (cols as f64 * area_fraction.sqrt()).round() as usize;
            (0..n)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    if r < side_r && c < side_c {
                        hi.sample(&mut rng)
                    } else {
                        lo.sample(&mut rng)
                    }
                })
                .collect()
        }
        SynthModel::Gradient {
            khz_per_um,
            gamma_khz,
        } => {
            let d = cauchy(gamma_khz)?;
            (0..n)
                .map(|i| khz_per_um * (i % cols) as f64 * pitch_um + d.sample(&mut rng))
                .collect()
        }
    };
    StrainMap::new(
        rows,
        cols,
        values,
        vec![true; n],
        pitch_um,
        NvAxis::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_maps_are_reproducible() {
        let m = SynthModel::Stationary { gamma_khz: 7.5 };
        let a = synthesize(&m, 20, 30, 3.0, 5).unwrap();
        assert_eq!(a, synthesize(&m, 20, 30, 3.0, 5).unwrap());
        assert_ne!(a, synthesize(&m, 20, 30, 3.0, 6).unwrap());
        assert_eq!((a.rows(), a.cols()), (20, 30));
    }

    #[test]
    fn named_models() {
        assert!(SynthModel::from_name("two-region").is_ok());
        assert!(SynthModel::from_name("checkerboard").is_err());
    }
}
