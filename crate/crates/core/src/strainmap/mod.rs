//! Wide-field strain maps: histogram linewidths, sub-region statistics
//! versus sensor size, and the resulting sensitivity scaling.

mod histogram;
mod lorentz;
mod partition;
mod scaling;
mod synth;

pub use histogram::{quantile, BinRule, Histogram};
pub use lorentz::{fwhm_of_values, histogram_fwhm, LorentzianFit};
pub use partition::{partition_sweep, PartitionConfig, PartitionStats, Quantiles};
pub use scaling::{fit_power_law, scaling_metric, PowerLawFit, ScalingPoint, ScalingResult};
pub use synth::{synthesize, SynthModel};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the four NV symmetry axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NvAxis {
    #[default]
    #[serde(rename = "[111]")]
    A,
    #[serde(rename = "[1-1-1]")]
    B,
    #[serde(rename = "[-11-1]")]
    C,
    #[serde(rename = "[-1-11]")]
    D,
}

impl NvAxis {
    pub fn label(self) -> &'static str {
        match self {
            NvAxis::A => "[111]",
            NvAxis::B => "[1-1-1]",
            NvAxis::C => "[-11-1]",
            NvAxis::D => "[-1-11]",
        }
    }
}

impl fmt::Display for NvAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NvAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [NvAxis::A, NvAxis::B, NvAxis::C, NvAxis::D]
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown NV axis {s:?}; expected [111], [1-1-1], [-11-1] or [-1-11]"
                ))
            })
    }
}

/// Mz frequency-shift map (kHz), row-major, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    pub pixel_pitch_um: f64,
    pub orientation: NvAxis,
}

impl StrainMap {
    /// Builds a map; pixels with `mask == false` are ignored and may hold
    /// any value.
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
        pixel_pitch_um: f64,
        orientation: NvAxis,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("strain map must have at least one pixel"));
        }
        if values.len() != rows * cols || mask.len() != rows * cols {
            return Err(Error::invalid(format!(
                "strain map is {rows}x{cols} but holds {} values and {} mask entries",
                values.len(),
                mask.len()
            )));
        }
        if !(pixel_pitch_um.is_finite() && pixel_pitch_um > 0.0) {
            return Err(Error::invalid(format!(
                "pixel pitch must be > 0, got {pixel_pitch_um}"
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("strain map is fully masked"));
        }
        if values.iter().zip(&mask).any(|(v, &m)| m && !v.is_finite()) {
            return Err(Error::invalid("strain map has non-finite valid pixels"));
        }
        Ok(StrainMap {
            rows,
            cols,
            values,
            mask,
            pixel_pitch_um,
            orientation,
        })
    }

    /// Map with every finite value valid and every non-finite one masked.
    pub fn from_values(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        pixel_pitch_um: f64,
    ) -> Result<Self> {
        let mask = values.iter().map(|v| v.is_finite()).collect();
        StrainMap::new(rows, cols, values, mask, pixel_pitch_um, NvAxis::default())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        self.mask[i].then(|| self.values[i])
    }

    pub fn valid_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect()
    }

    /// Valid pixels of the `size × size` square whose top-left pixel is
    /// `(row, col)`.
    pub fn tile_values(&self, row: usize, col: usize, size: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(size * size);
        for r in row..row + size {
            let start = r * self.cols + col;
            for i in start..start + size {
                if self.mask[i] {
                    out.push(self.values[i]);
                }
            }
        }
        out
    }

    /// Map extent (rows, cols) in µm.
    pub fn extent_um(&self) -> (f64, f64) {
        (
            self.rows as f64 * self.pixel_pitch_um,
            self.cols as f64 * self.pixel_pitch_um,
        )
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> StrainMap {
        StrainMap {
            values: self
                .values
                .iter()
                .zip(&self.mask)
                .map(|(&v, &m)| if m { f(v) } else { v })
                .collect(),
            ..self.clone()
        }
    }
}

/// Subtracts `mean` from `values` in two passes so the result averages to
/// zero at rounding level.
pub(crate) fn subtract_mean(values: &mut [f64]) {
    for _ in 0..2 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Removes the masked mean so the valid pixels average to zero.
pub fn mean_subtract(map: &StrainMap) -> Result<StrainMap> {
    let mut valid = map.valid_values();
    if valid.is_empty() {
        return Err(Error::invalid("strain map is fully masked"));
    }
    subtract_mean(&mut valid);
    let mut values = map.values.clone();
    let mut it = valid.into_iter();
    for (v, &m) in values.iter_mut().zip(&map.mask) {
        if m {
            *v = it.next().expect("valid count");
        }
    }
    Ok(StrainMap {
        values,
        ..map.clone()
    })
}
