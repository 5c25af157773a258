use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::Intensity;

/// One intensity-dependent operating point of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityRow {
    pub intensity: f64,
    pub contrast: f64,
    pub psi: f64,
    pub t_overhead_us: f64,
    pub photon_rate_kcps: Option<f64>,
    pub readout_us: Option<f64>,
    pub t2_sq_us: Option<f64>,
    pub t2_dq_us: Option<f64>,
}

impl IntensityRow {
    pub fn new(intensity: f64, contrast: f64, psi: f64, t_overhead_us: f64) -> Self {
        IntensityRow {
            intensity,
            contrast,
            psi,
            t_overhead_us,
            photon_rate_kcps: None,
            readout_us: None,
            t2_sq_us: None,
            t2_dq_us: None,
        }
    }

    fn optional(&self) -> [Option<f64>; 4] {
        [
            self.photon_rate_kcps,
            self.readout_us,
            self.t2_sq_us,
            self.t2_dq_us,
        ]
    }
}

/// Measured or synthetic operating points, strictly increasing in intensity.
/// Quantities between rows are interpolated linearly in log₁₀(intensity);
/// there is no extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityTable {
    rows: Vec<IntensityRow>,
}

impl IntensityTable {
    pub fn new(rows: Vec<IntensityRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("intensity table has no rows"));
        }
        for (i, r) in rows.iter().enumerate() {
            let row = i + 1;
            let finite = [r.intensity, r.contrast, r.psi, r.t_overhead_us]
                .iter()
                .chain(r.optional().iter().flatten())
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::invalid(format!("row {row}: non-finite value")));
            }
            if r.intensity <= 0.0 {
                return Err(Error::invalid(format!("row {row}: intensity must be > 0")));
            }
            if !(r.contrast > 0.0 && r.contrast <= 1.0) {
                return Err(Error::invalid(format!(
                    "row {row}: contrast must lie in (0,1]"
                )));
            }
            if !(0.0..=1.0).contains(&r.psi) {
                return Err(Error::invalid(format!("row {row}: psi out of [0,1]")));
            }
            if r.t_overhead_us < 0.0 {
                return Err(Error::invalid(format!("row {row}: overhead must be >= 0")));
            }
            if r.optional().iter().flatten().any(|&v| v <= 0.0) {
                return Err(Error::invalid(format!(
                    "row {row}: optional columns must be > 0"
                )));
            }
            let present = r.optional().map(|o| o.is_some());
            if present != rows[0].optional().map(|o| o.is_some()) {
                return Err(Error::invalid(format!(
                    "row {row}: optional columns must be filled on every row or none"
                )));
            }
            if i > 0 {
                let prev = rows[i - 1].intensity;
                if r.intensity == prev {
                    return Err(Error::invalid(format!(
                        "row {row}: duplicate intensity {}",
                        r.intensity
                    )));
                }
                if r.intensity < prev {
                    return Err(Error::invalid(format!(
                        "row {row}: intensity {} is not increasing",
                        r.intensity
                    )));
                }
            }
        }
        Ok(IntensityTable { rows })
    }

    pub fn rows(&self) -> &[IntensityRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(min, max)` intensity covered by the table.
    pub fn range(&self) -> (f64, f64) {
        (
            self.rows[0].intensity,
            self.rows[self.rows.len() - 1].intensity,
        )
    }

    /// Operating point at `intensity`, interpolated in log₁₀ intensity.
    pub fn at(&self, intensity: Intensity) -> Result<IntensityRow> {
        let x = intensity.value();
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::invalid(format!(
                "intensity {x} mW/um2 outside table range [{lo}, {hi}]; no extrapolation"
            )));
        }
        let k = self.rows.partition_point(|r| r.intensity < x);
        if self.rows[k].intensity == x {
            return Ok(self.rows[k]);
        }
        let (a, b) = (&self.rows[k - 1], &self.rows[k]);
        let w = (x.log10() - a.intensity.log10()) / (b.intensity.log10() - a.intensity.log10());
        let lerp = |u: f64, v: f64| u + w * (v - u);
        let lerp_opt = |u: Option<f64>, v: Option<f64>| u.zip(v).map(|(u, v)| lerp(u, v));
        Ok(IntensityRow {
            intensity: x,
            contrast: lerp(a.contrast, b.contrast),
            psi: lerp(a.psi, b.psi),
            t_overhead_us: lerp(a.t_overhead_us, b.t_overhead_us),
            photon_rate_kcps: lerp_opt(a.photon_rate_kcps, b.photon_rate_kcps),
            readout_us: lerp_opt(a.readout_us, b.readout_us),
            t2_sq_us: lerp_opt(a.t2_sq_us, b.t2_sq_us),
            t2_dq_us: lerp_opt(a.t2_dq_us, b.t2_dq_us),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> IntensityTable {
        IntensityTable::new(vec![
            IntensityRow::new(0.01, 0.04, 0.3, 100.0),
            IntensityRow::new(1.0, 0.02, 0.1, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn interpolates_in_log_intensity() {
        let r = table().at(Intensity::mw_per_um2(0.1).unwrap()).unwrap();
        assert!((r.contrast - 0.03).abs() < 1e-15);
        assert!((r.psi - 0.2).abs() < 1e-15);
        assert!((r.t_overhead_us - 51.0).abs() < 1e-12);
    }

    #[test]
    fn endpoints_are_exact() {
        let t = table();
        assert_eq!(
            t.at(Intensity::mw_per_um2(1.0).unwrap()).unwrap(),
            t.rows()[1]
        );
        assert_eq!(
            t.at(Intensity::mw_per_um2(0.01).unwrap()).unwrap(),
            t.rows()[0]
        );
    }

    #[test]
    fn refuses_extrapolation() {
        let err = table().at(Intensity::mw_per_um2(2.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("no extrapolation"));
    }

    #[test]
    fn rejects_bad_rows() {
        let dup = IntensityTable::new(vec![
            IntensityRow::new(0.1, 0.03, 0.2, 5.0),
            IntensityRow::new(0.1, 0.03, 0.2, 5.0),
        ]);
        assert!(dup.unwrap_err().to_string().contains("row 2: duplicate"));
        let dec = IntensityTable::new(vec![
            IntensityRow::new(0.2, 0.03, 0.2, 5.0),
            IntensityRow::new(0.1, 0.03, 0.2, 5.0),
        ]);
        assert!(dec.unwrap_err().to_string().contains("not increasing"));
        let nan = IntensityTable::new(vec![IntensityRow::new(0.2, f64::NAN, 0.2, 5.0)]);
        assert!(nan.is_err());
    }
}
