use rayon::prelude::*;
use serde::Serialize;

use super::histogram::{quantile, BinRule};
use super::lorentz::fwhm_of_values;
use super::{subtract_mean, StrainMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PartitionConfig {
    pub bins: BinRule,
    /// Pixel offset (row, col) of the tiling origin.
    pub tile_offset: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub p10: f64,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
}

/// Linewidth statistics over the square tiles of one sensor size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionStats {
    pub sensor_size_um: f64,
    pub tile_px: usize,
    pub n_tiles: usize,
    /// Tiles whose histogram could not be fitted (too few valid pixels or
    /// an under-resolved linewidth).
    pub n_failed: usize,
    /// FWHM (kHz) of every fitted tile, in row-major tile order.
    pub fwhm: Vec<f64>,
    pub min: f64,
    pub median: f64,
    /// Present only with more than five fitted tiles.
    pub quantiles: Option<Quantiles>,
}

const MIN_TILE_PX: usize = 4;

fn tile_side(map: &StrainMap, size_um: f64, offset: (usize, usize)) -> Result<usize> {
    if !(size_um.is_finite() && size_um > 0.0) {
        return Err(Error::invalid(format!(
            "sensor size must be > 0, got {size_um}"
        )));
    }
    let k = (size_um / map.pixel_pitch_um).round() as usize;
    if k < MIN_TILE_PX {
        return Err(Error::invalid(format!(
            "sensor size {size_um} um is {k} px across at pitch {} um; need >= {MIN_TILE_PX}",
            map.pixel_pitch_um
        )));
    }
    let avail = (map.rows().saturating_sub(offset.0)).min(map.cols().saturating_sub(offset.1));
    if k > avail {
        return Err(Error::invalid(format!(
            "sensor size {size_um} um ({k} px) exceeds the map extent ({avail} px after offset)"
        )));
    }
    Ok(k)
}

fn stats_for_size(map: &StrainMap, size_um: f64, cfg: &PartitionConfig) -> Result<PartitionStats> {
    let k = tile_side(map, size_um, cfg.tile_offset)?;
    let (r0, c0) = cfg.tile_offset;
    let origins: Vec<(usize, usize)> = (r0..=map.rows() - k)
        .step_by(k)
        .flat_map(|r| (c0..=map.cols() - k).step_by(k).map(move |c| (r, c)))
        .collect();
    let fits: Vec<Result<f64>> = origins
        .par_iter()
        .map(|&(r, c)| {
            let mut v = map.tile_values(r, c, k);
            if v.is_empty() {
                return Err(Error::invalid("tile has no valid pixels"));
            }
            subtract_mean(&mut v);
            fwhm_of_values(&v, cfg.bins).map(|f| f.fwhm)
        })
        .collect();
    let n_tiles = fits.len();
    let mut fwhm = Vec::with_capacity(n_tiles);
    let mut first_err = None;
    for f in fits {
        match f {
            Ok(v) => fwhm.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if fwhm.is_empty() {
        let e = first_err.expect("at least one tile");
        return Err(Error::computation(format!(
            "no tile of size {size_um} um could be fitted: {e}"
        )));
    }
    let mut sorted = fwhm.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = (sorted.len() > 5).then(|| Quantiles {
        p10: quantile(&sorted, 0.10),
        p25: quantile(&sorted, 0.25),
        p75: quantile(&sorted, 0.75),
        p90: quantile(&sorted, 0.90),
    });
    Ok(PartitionStats {
        sensor_size_um: size_um,
        tile_px: k,
        n_tiles,
        n_failed: n_tiles - fwhm.len(),
        min: sorted[0],
        median: quantile(&sorted, 0.5),
        quantiles,
        fwhm,
    })
}

/// Splits the map into non-overlapping square tiles for each sensor size
/// (µm), mean-subtracts and fits each tile, and summarizes the widths.
/// Partial tiles at the far edges are discarded.
pub fn partition_sweep(
    map: &StrainMap,
    sizes_um: &[f64],
    cfg: &PartitionConfig,
) -> Result<Vec<PartitionStats>> {
    if sizes_um.is_empty() {
        return Err(Error::invalid("no sensor sizes given"));
    }
    for &s in sizes_um {
        tile_side(map, s, cfg.tile_offset)?;
    }
    sizes_um
        .iter()
        .map(|&s| stats_for_size(map, s, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{histogram_fwhm, mean_subtract, synthesize, SynthModel};
    use super::*;

    #[test]
    fn single_tile_matches_full_map_fit() {
        let map = synthesize(&SynthModel::Stationary { gamma_khz: 7.5 }, 120, 120, 3.0, 9).unwrap();
        let stats = partition_sweep(&map, &[360.0], &PartitionConfig::default()).unwrap();
        let full = histogram_fwhm(&mean_subtract(&map).unwrap(), BinRule::default()).unwrap();
        assert_eq!(stats[0].n_tiles, 1);
        assert_eq!(stats[0].median, full.fwhm);
        assert!(stats[0].quantiles.is_none());
    }

    #[test]
    fn order_statistics_are_ordered() {
        let map = synthesize(&SynthModel::default_two_region(), 200, 200, 3.0, 1).unwrap();
        for s in partition_sweep(&map, &[60.0, 150.0], &PartitionConfig::default()).unwrap() {
            let q = s.quantiles.unwrap();
            assert!(s.min <= q.p10 && q.p10 <= q.p25 && q.p25 <= s.median);
            assert!(s.median <= q.p75 && q.p75 <= q.p90);
        }
    }

    #[test]
    fn two_region_map_spreads_at_small_sizes() {
        let map = synthesize(&SynthModel::default_two_region(), 300, 300, 3.0, 2).unwrap();
        let stats = partition_sweep(&map, &[45.0, 180.0], &PartitionConfig::default()).unwrap();
        let spread = |s: &PartitionStats| {
            let q = s.quantiles.unwrap();
            q.p90 - q.p10
        };
        assert!(stats[0].min < stats[0].median);
        assert!(
            spread(&stats[0]) > spread(&stats[1]),
            "{} vs {}",
            spread(&stats[0]),
            spread(&stats[1])
        );
    }

    #[test]
    fn deterministic() {
        let map = synthesize(&SynthModel::Stationary { gamma_khz: 5.0 }, 100, 100, 3.0, 3).unwrap();
        let a = partition_sweep(&map, &[30.0, 90.0], &PartitionConfig::default()).unwrap();
        let b = partition_sweep(&map, &[30.0, 90.0], &PartitionConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_tiny_and_oversized_tiles() {
        let map = synthesize(&SynthModel::Stationary { gamma_khz: 5.0 }, 50, 50, 3.0, 3).unwrap();
        let err = partition_sweep(&map, &[9.0], &PartitionConfig::default()).unwrap_err();
        assert!(err.to_string().contains("need >= 4"), "{err}");
        assert!(partition_sweep(&map, &[300.0], &PartitionConfig::default()).is_err());
    }

    #[test]
    fn small_tiles_are_counted_as_failed() {
        // 8 px tiles hold 64 < 100 pixels; 40 px tiles fit
        let map = synthesize(&SynthModel::Stationary { gamma_khz: 5.0 }, 80, 80, 1.0, 3).unwrap();
        let err = partition_sweep(&map, &[8.0], &PartitionConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no tile"), "{err}");
        let ok = partition_sweep(&map, &[40.0], &PartitionConfig::default()).unwrap();
        assert_eq!((ok[0].n_tiles, ok[0].n_failed), (4, 0));
    }
}
