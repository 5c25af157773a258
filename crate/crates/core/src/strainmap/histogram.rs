use serde::Serialize;

use crate::error::{Error, Result};

/// Bin-width choice for linewidth histograms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub enum BinRule {
    /// `h = 2·IQR/n^(1/3)`.
    #[default]
    FreedmanDiaconis,
    /// Fixed width, kHz.
    Fixed(f64),
}

impl BinRule {
    /// Bin width for `sorted` (ascending) samples.
    pub fn width(self, sorted: &[f64]) -> Result<f64> {
        match self {
            BinRule::Fixed(w) if w.is_finite() && w > 0.0 => Ok(w),
            BinRule::Fixed(w) => Err(Error::invalid(format!("bin width must be > 0, got {w}"))),
            BinRule::FreedmanDiaconis => {
                let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
                Ok(2.0 * iqr / (sorted.len() as f64).cbrt())
            }
        }
    }
}

/// Linearly interpolated quantile of ascending data (Hyndman–Fan type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Counts on the lattice of bins `[k·w, (k+1)·w)`, stored from bin
/// `first` on. Histograms with equal width merge exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub width: f64,
    pub first: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn bin(&self, x: f64) -> i64 {
        (x / self.width).floor() as i64
    }

    /// Histogram of `values` restricted to `[lo, hi]` when a range is
    /// given; out-of-range values are dropped.
    pub fn build(values: &[f64], width: f64, range: Option<(f64, f64)>) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!(
                "bin width must be > 0, got {width}"
            )));
        }
        let (lo, hi) = match range {
            Some(r) => r,
            None => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                }),
        };
        if !(lo <= hi) {
            return Ok(Histogram {
                width,
                first: 0,
                counts: Vec::new(),
            });
        }
        let mut h = Histogram {
            width,
            first: 0,
            counts: Vec::new(),
        };
        let (b0, b1) = (h.bin(lo), h.bin(hi));
        let nbins =
            usize::try_from(b1 - b0 + 1).map_err(|_| Error::invalid("bin range overflow"))?;
        if nbins > 50_000_000 {
            return Err(Error::invalid(format!(
                "{nbins} bins requested; widen the bins"
            )));
        }
        h.first = b0;
        h.counts = vec![0; nbins];
        for &v in values {
            if v >= lo && v <= hi {
                let k = (h.bin(v) - b0) as usize;
                h.counts[k] += 1;
            }
        }
        Ok(h)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(lower, upper)` edges of stored bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let k = (self.first + i as i64) as f64;
        (k * self.width, (k + 1.0) * self.width)
    }

    /// Sum of two histograms on the same lattice.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        if self.width != other.width {
            return Err(Error::invalid(
                "cannot merge histograms with different bin widths",
            ));
        }
        if self.counts.is_empty() {
            return Ok(other.clone());
        }
        if other.counts.is_empty() {
            return Ok(self.clone());
        }
        let first = self.first.min(other.first);
        let last =
            (self.first + self.counts.len() as i64).max(other.first + other.counts.len() as i64);
        let mut counts = vec![0; (last - first) as usize];
        for h in [self, other] {
            let off = (h.first - first) as usize;
            for (i, c) in h.counts.iter().enumerate() {
                counts[off + i] += c;
            }
        }
        Ok(Histogram {
            width: self.width,
            first,
            counts,
        })
    }

    /// Same counts with empty bins trimmed from both ends.
    pub fn trimmed(&self) -> Histogram {
        let Some(a) = self.counts.iter().position(|&c| c > 0) else {
            return Histogram {
                width: self.width,
                first: 0,
                counts: Vec::new(),
            };
        };
        let b = self.counts.iter().rposition(|&c| c > 0).expect("non-empty");
        Histogram {
            width: self.width,
            first: self.first + a as i64,
            counts: self.counts[a..=b].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn bins_are_lattice_anchored() {
        let h = Histogram::build(&[0.1, 0.9, 1.0, -0.5], 1.0, None).unwrap();
        assert_eq!(h.first, -1);
        assert_eq!(h.counts, vec![1, 2, 1]);
        assert_eq!(h.edges(0), (-1.0, 0.0));
    }

    #[test]
    fn range_drops_outliers() {
        let h = Histogram::build(&[0.1, 0.2, 50.0], 0.5, Some((-1.0, 1.0))).unwrap();
        assert_eq!(h.total(), 2);
    }

    proptest! {
        #[test]
        fn union_of_parts_equals_whole(
            v in proptest::collection::vec(-100.0f64..100.0, 1..300),
            cut in 0usize..300,
            w in 0.05f64..10.0,
        ) {
            let cut = cut.min(v.len());
            let whole = Histogram::build(&v, w, None).unwrap();
            let a = Histogram::build(&v[..cut], w, None).unwrap();
            let b = Histogram::build(&v[cut..], w, None).unwrap();
            prop_assert_eq!(a.merge(&b).unwrap().trimmed(), whole.trimmed());
        }
    }
}
