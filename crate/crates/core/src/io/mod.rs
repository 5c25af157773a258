//! Configuration files, dataset formats and result emission.
//!
//! CSV files use a header row with unit-suffixed column names, `.` as the
//! decimal separator and LF line endings. Floats are written with nine
//! significant digits. Every emitted result gets a `<out>.manifest.json`
//! sidecar describing how it was produced.

mod config;
mod files;
mod manifest;

pub use config::{
    parse_config, Config, DephasingSection, MetricSection, RamseySection, SampleSection,
    SensingSection, StrainSection,
};
pub use files::{
    read_intensity_table, read_ramsey_signal, read_spectrum, read_strain_map, sidecar_path,
    strain_map_csv, write_intensity_table, write_strain_map, StrainSidecar,
};
pub(crate) use manifest::io_error;
pub use manifest::{
    emit_csv, emit_json, manifest_path, round_json, sha256_file, CsvTable, FileDigest, RunManifest,
};

/// Formats `x` with nine significant digits, in plain notation for
/// magnitudes in [1e-4, 1e9) and scientific notation otherwise.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to nine significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x.is_finite() {
        format_sig9(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.1), "0.1");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(-2.0 / 3.0 * 1e-6), "-6.66666667e-7");
        assert_eq!(format_sig9(123456789012.0), "1.23456789e11");
        assert_eq!(format_sig9(9.9999999996), "10");
        assert_eq!(format_sig9(12186.123456789), "12186.1235");
        assert_eq!(format_sig9(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn rounding_is_within_half_ulp_of_nine_digits(x in -1e12f64..1e12) {
            let r = round_sig9(x);
            prop_assert!((r - x).abs() <= 5e-9 * x.abs().max(f64::MIN_POSITIVE));
            prop_assert_eq!(round_sig9(r), r);
        }
    }
}
