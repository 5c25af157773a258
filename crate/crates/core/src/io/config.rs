//! Line-oriented configuration files.
//!
//! ```text
//! # comment
//! ns0_ppm = 0.8          # keys before any header belong to [sample]
//! c13_ppm = 108 [ppm]    # an optional unit must match the schema
//!
//! [photophysics]
//! kappa_35 = 1/7         # rationals are accepted
//! ```
//!
//! Sections: `[sample]`, `[constants]`, `[bath]`, `[dephasing]`,
//! `[metric]`, `[sensing]`, `[photon]`, `[ramsey]`, `[photophysics]`,
//! `[strain]`. Unknown sections and keys, duplicate keys, unit mismatches
//! and malformed values are rejected with the offending line number.

use std::path::Path;

use serde::Serialize;

use crate::dephasing::BathCoefficients;
use crate::error::{Error, Result};
use crate::photophysics::FiveLevelParams;
use crate::ramsey::RamseyModel;
use crate::sensitivity::{MetricConfig, PhotonModel, SensorSetup, TauPolicy};
use crate::units::{Concentration, DiamondSample, GammaConvention, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSection {
    /// As-grown substitutional nitrogen.
    pub ns0_ppm: f64,
    pub c13_ppm: f64,
    pub nv_ppm: f64,
    pub psi: f64,
    pub n_orientations: u8,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            ns0_ppm: 0.8,
            c13_ppm: 108.0,
            nv_ppm: 0.39,
            psi: 0.2,
            n_orientations: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DephasingSection {
    pub strain_fwhm_khz: f64,
    pub bias_rate_per_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSection {
    pub c13_ppm: f64,
    pub t_overhead_us: f64,
}

impl Default for MetricSection {
    fn default() -> Self {
        MetricSection {
            c13_ppm: 50.0,
            t_overhead_us: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensingSection {
    pub stretch_p: f64,
    pub tau_policy: TauPolicy,
}

impl Default for SensingSection {
    fn default() -> Self {
        SensingSection {
            stretch_p: 1.0,
            tau_policy: TauPolicy::Optimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseySection {
    pub model: RamseyModel,
    pub noise_sigma: f64,
    pub n_samples: usize,
    pub dt_us: f64,
}

impl Default for RamseySection {
    fn default() -> Self {
        RamseySection {
            model: RamseyModel::default(),
            noise_sigma: 0.0,
            n_samples: 1200,
            dt_us: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StrainSection {
    /// Fixed histogram bin width; Freedman–Diaconis when absent.
    pub bin_width_khz: Option<f64>,
}

/// Fully resolved configuration with defaults for everything not given.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Config {
    pub sample: SampleSection,
    pub constants: PhysicalConstants,
    pub bath: BathCoefficients,
    pub dephasing: DephasingSection,
    pub metric: MetricSection,
    pub sensing: SensingSection,
    pub photon: PhotonModel,
    pub ramsey: RamseySection,
    pub photophysics: FiveLevelParams,
    pub strain: StrainSection,
}

const SECTIONS: [&str; 10] = [
    "sample",
    "constants",
    "bath",
    "dephasing",
    "metric",
    "sensing",
    "photon",
    "ramsey",
    "photophysics",
    "strain",
];

/// Unit of each key; `""` marks dimensionless or symbolic values, which
/// take no unit.
const SCHEMA: &[(&str, &str, &str)] = &[
    ("sample", "ns0_ppm", "ppm"),
    ("sample", "c13_ppm", "ppm"),
    ("sample", "nv_ppm", "ppm"),
    ("sample", "psi", ""),
    ("sample", "n_orientations", ""),
    ("constants", "gamma_e_mhz_per_g", "MHz/G"),
    ("constants", "gamma_convention", ""),
    ("bath", "a_ns0_per_us_ppm", "1/us/ppm"),
    ("bath", "a_c13_per_ms_ppm", "1/ms/ppm"),
    ("bath", "a_nv_par_per_us_ppm", "1/us/ppm"),
    ("bath", "a_nv_nonpar_per_us_ppm", "1/us/ppm"),
    ("bath", "zeta_par", ""),
    ("bath", "zeta_nonpar", ""),
    ("dephasing", "strain_fwhm_khz", "kHz"),
    ("dephasing", "bias_rate_per_us", "1/us"),
    ("metric", "c13_ppm", "ppm"),
    ("metric", "t_overhead_us", "us"),
    ("sensing", "stretch_p", ""),
    ("sensing", "tau_policy", ""),
    ("sensing", "tau_us", "us"),
    ("photon", "rate_at_1mw_kcps", "kcps"),
    ("photon", "i_sat_mw_um2", "mW/um2"),
    ("photon", "readout_us", "us"),
    ("ramsey", "t2_us", "us"),
    ("ramsey", "p", ""),
    ("ramsey", "detuning_mhz", "MHz"),
    ("ramsey", "hyperfine_mhz", "MHz"),
    ("ramsey", "n_hyperfine", ""),
    ("ramsey", "amplitude", ""),
    ("ramsey", "baseline", ""),
    ("ramsey", "noise_sigma", ""),
    ("ramsey", "n_samples", ""),
    ("ramsey", "dt_us", "us"),
    ("photophysics", "gamma_per_us", "1/us"),
    ("photophysics", "kappa_45", ""),
    ("photophysics", "kappa_35", ""),
    ("photophysics", "kappa_52", ""),
    ("photophysics", "kappa_51", ""),
    ("photophysics", "i_sat_lower_mw_um2", "mW/um2"),
    ("photophysics", "i_sat_upper_mw_um2", "mW/um2"),
    ("strain", "bin_width_khz", "kHz"),
];

fn normalize_unit(u: &str) -> String {
    u.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            'µ' | 'μ' => 'u',
            '²' => '2',
            c => c,
        })
        .collect::<String>()
        .to_ascii_lowercase()
}

fn number(raw: &str) -> std::result::Result<f64, String> {
    let parse = |s: &str| s.trim().parse::<f64>().ok();
    let v = match raw.split_once('/') {
        Some((n, d)) => match (parse(n), parse(d)) {
            (Some(n), Some(d)) if d != 0.0 => Some(n / d),
            _ => None,
        },
        None => parse(raw),
    };
    match v {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a number, got '{raw}'")),
    }
}

fn non_negative(key: &str, raw: &str) -> std::result::Result<f64, String> {
    let v = number(raw)?;
    if v < 0.0 {
        return Err(format!("{key} must be >= 0, got {v}"));
    }
    Ok(v)
}

fn positive(key: &str, raw: &str) -> std::result::Result<f64, String> {
    let v = number(raw)?;
    if v <= 0.0 {
        return Err(format!("{key} must be > 0, got {v}"));
    }
    Ok(v)
}

fn unit_interval(key: &str, raw: &str) -> std::result::Result<f64, String> {
    let v = number(raw)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{key} out of [0,1]"));
    }
    Ok(v)
}

fn integer(key: &str, raw: &str, lo: usize, hi: usize) -> std::result::Result<usize, String> {
    let v: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("expected an integer for {key}, got '{raw}'"))?;
    if !(lo..=hi).contains(&v) {
        return Err(format!("{key} must lie in [{lo}, {hi}], got {v}"));
    }
    Ok(v)
}

impl Config {
    /// Sets one key from its textual value, checking the unit when given.
    fn set(
        &mut self,
        section: &str,
        key: &str,
        raw: &str,
        unit: Option<&str>,
    ) -> std::result::Result<(), String> {
        let Some(&(_, _, expected)) = SCHEMA.iter().find(|(s, k, _)| *s == section && *k == key)
        else {
            return Err(format!("unknown key '{key}' in [{section}]"));
        };
        if let Some(u) = unit {
            if expected.is_empty() {
                return Err(format!("key '{key}' takes no unit, got [{u}]"));
            }
            if normalize_unit(u) != normalize_unit(expected) {
                return Err(format!(
                    "unit mismatch for '{key}': expected [{expected}], got [{u}]"
                ));
            }
        }
        match (section, key) {
            ("sample", "ns0_ppm") => self.sample.ns0_ppm = non_negative(key, raw)?,
            ("sample", "c13_ppm") => self.sample.c13_ppm = non_negative(key, raw)?,
            ("sample", "nv_ppm") => self.sample.nv_ppm = non_negative(key, raw)?,
            ("sample", "psi") => self.sample.psi = unit_interval(key, raw)?,
            ("sample", "n_orientations") => {
                self.sample.n_orientations = integer(key, raw, 1, 4)? as u8
            }
            ("constants", "gamma_e_mhz_per_g") => self.constants.gamma_e = positive(key, raw)?,
            ("constants", "gamma_convention") => {
                self.constants.gamma_convention = match raw {
                    "cyclic" => GammaConvention::Cyclic,
                    "angular" => GammaConvention::Angular,
                    other => {
                        return Err(format!(
                            "gamma_convention must be cyclic or angular, got '{other}'"
                        ))
                    }
                }
            }
            ("bath", "a_ns0_per_us_ppm") => self.bath.a_ns0 = non_negative(key, raw)?,
            ("bath", "a_c13_per_ms_ppm") => {
                self.bath.a_c13 = BathCoefficients::per_ms_to_per_us(non_negative(key, raw)?)
            }
            ("bath", "a_nv_par_per_us_ppm") => self.bath.a_nv_par = non_negative(key, raw)?,
            ("bath", "a_nv_nonpar_per_us_ppm") => self.bath.a_nv_nonpar = non_negative(key, raw)?,
            ("bath", "zeta_par") => self.bath.zeta_par = unit_interval(key, raw)?,
            ("bath", "zeta_nonpar") => self.bath.zeta_nonpar = unit_interval(key, raw)?,
            ("dephasing", "strain_fwhm_khz") => {
                self.dephasing.strain_fwhm_khz = non_negative(key, raw)?
            }
            ("dephasing", "bias_rate_per_us") => {
                self.dephasing.bias_rate_per_us = non_negative(key, raw)?
            }
            ("metric", "c13_ppm") => self.metric.c13_ppm = non_negative(key, raw)?,
            ("metric", "t_overhead_us") => self.metric.t_overhead_us = non_negative(key, raw)?,
            ("sensing", "stretch_p") => self.sensing.stretch_p = positive(key, raw)?,
            ("sensing", "tau_policy") => {
                self.sensing.tau_policy = match (raw, self.sensing.tau_policy) {
                    ("optimal", _) => TauPolicy::Optimal,
                    ("equal-t2", _) => TauPolicy::EqualT2,
                    ("fixed", TauPolicy::Fixed(t)) => TauPolicy::Fixed(t),
                    ("fixed", _) => TauPolicy::Fixed(f64::NAN),
                    (other, _) => {
                        return Err(format!(
                            "tau_policy must be optimal, equal-t2 or fixed, got '{other}'"
                        ))
                    }
                }
            }
            ("sensing", "tau_us") => {
                self.sensing.tau_policy = TauPolicy::Fixed(positive(key, raw)?)
            }
            ("photon", "rate_at_1mw_kcps") => self.photon.rate_at_1mw_kcps = positive(key, raw)?,
            ("photon", "i_sat_mw_um2") => self.photon.i_sat = positive(key, raw)?,
            ("photon", "readout_us") => self.photon.readout_us = Some(positive(key, raw)?),
            ("ramsey", "t2_us") => self.ramsey.model.t2_star = positive(key, raw)?,
            ("ramsey", "p") => self.ramsey.model.p = positive(key, raw)?,
            ("ramsey", "detuning_mhz") => self.ramsey.model.detuning = non_negative(key, raw)?,
            ("ramsey", "hyperfine_mhz") => {
                self.ramsey.model.hyperfine_splitting = non_negative(key, raw)?
            }
            ("ramsey", "n_hyperfine") => self.ramsey.model.n_hyperfine = integer(key, raw, 1, 16)?,
            ("ramsey", "amplitude") => self.ramsey.model.amplitude = number(raw)?,
            ("ramsey", "baseline") => self.ramsey.model.baseline = number(raw)?,
            ("ramsey", "noise_sigma") => self.ramsey.noise_sigma = non_negative(key, raw)?,
            ("ramsey", "n_samples") => self.ramsey.n_samples = integer(key, raw, 32, 100_000_000)?,
            ("ramsey", "dt_us") => self.ramsey.dt_us = positive(key, raw)?,
            ("photophysics", "gamma_per_us") => self.photophysics.gamma = positive(key, raw)?,
            ("photophysics", "kappa_45") => self.photophysics.kappa_45 = non_negative(key, raw)?,
            ("photophysics", "kappa_35") => self.photophysics.kappa_35 = non_negative(key, raw)?,
            ("photophysics", "kappa_52") => self.photophysics.kappa_52 = non_negative(key, raw)?,
            ("photophysics", "kappa_51") => self.photophysics.kappa_51 = non_negative(key, raw)?,
            ("photophysics", "i_sat_lower_mw_um2") => {
                self.photophysics.i_sat_band.0 = positive(key, raw)?
            }
            ("photophysics", "i_sat_upper_mw_um2") => {
                self.photophysics.i_sat_band.1 = positive(key, raw)?
            }
            ("strain", "bin_width_khz") => self.strain.bin_width_khz = Some(positive(key, raw)?),
            _ => unreachable!("schema and setter disagree on {section}.{key}"),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut section = "sample".to_string();
        let mut seen: Vec<(String, String)> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| Error::Config { line, message };
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let Some((key, rest)) = content.split_once('=') else {
                return Err(err(format!("expected 'key = value', got '{content}'")));
            };
            let key = key.trim();
            let (value, unit) = split_unit(rest.trim());
            if key.is_empty() || value.is_empty() {
                return Err(err(format!("expected 'key = value', got '{content}'")));
            }
            let id = (section.clone(), key.to_string());
            if seen.contains(&id) {
                return Err(err(format!("duplicate key '{key}' in [{section}]")));
            }
            seen.push(id);
            cfg.set(&section, key, value, unit).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a `section.key=value` override (a bare key means `[sample]`).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let err = |m: String| Error::invalid(format!("--set {spec}: {m}"));
        let (path, rest) = spec
            .split_once('=')
            .ok_or_else(|| err("expected section.key=value".into()))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .unwrap_or(("sample", path.trim()));
        if !SECTIONS.contains(&section) {
            return Err(err(format!("unknown section [{section}]")));
        }
        let (value, unit) = split_unit(rest.trim());
        self.set(section, key, value, unit).map_err(err)?;
        self.validate()
    }

    /// Cross-key checks that cannot be made one key at a time.
    pub fn validate(&self) -> Result<()> {
        self.sample()?;
        self.constants.validate()?;
        self.bath.validate()?;
        self.photon.validate()?;
        self.photophysics.validate()?;
        self.ramsey.model.validate()?;
        if let TauPolicy::Fixed(t) = self.sensing.tau_policy {
            if t.is_nan() {
                return Err(Error::invalid("config: tau_policy = fixed needs tau_us"));
            }
        }
        Ok(())
    }

    pub fn sample(&self) -> Result<DiamondSample> {
        let s = &self.sample;
        let mut sample = DiamondSample::new(s.ns0_ppm, s.c13_ppm, s.nv_ppm, s.psi)?;
        sample.n_orientations_sensing = s.n_orientations;
        Ok(sample)
    }

    pub fn sensor_setup(&self) -> SensorSetup {
        SensorSetup {
            constants: self.constants,
            bath: self.bath,
            strain_fwhm_khz: self.dephasing.strain_fwhm_khz,
            bias_rate_per_us: self.dephasing.bias_rate_per_us,
            photon: self.photon,
            stretch_p: self.sensing.stretch_p,
            tau_policy: self.sensing.tau_policy,
        }
    }

    pub fn metric_config(&self) -> Result<MetricConfig> {
        Ok(MetricConfig {
            c13: Concentration::ppm(self.metric.c13_ppm)?,
            t_overhead: self.metric.t_overhead_us,
            bath: self.bath,
        })
    }
}

fn split_unit(rest: &str) -> (&str, Option<&str>) {
    if let Some(body) = rest.strip_suffix(']') {
        if let Some(i) = body.rfind('[') {
            return (body[..i].trim(), Some(body[i + 1..].trim()));
        }
    }
    (rest, None)
}

/// Reads and resolves a configuration file.
pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Config::parse_str(&text).map_err(|e| match e {
        Error::Config { line, message } => Error::Config {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_sample_fills_defaults() {
        let cfg =
            Config::parse_str("ns0_ppm = 14\nc13_ppm = 108\nnv_ppm = 3.0\npsi = 0.6\n").unwrap();
        assert_eq!(cfg.sample.ns0_ppm, 14.0);
        assert_eq!(cfg.sample.n_orientations, 1);
        assert_eq!(cfg.bath, BathCoefficients::default());
        assert_eq!(cfg.photophysics, FiveLevelParams::default());
        assert_eq!(cfg.metric.c13_ppm, 50.0);
    }

    #[test]
    fn sections_units_and_rationals() {
        let text = "\
# sample
ns0_ppm = 0.8 [ppm]
[bath]
a_ns0_per_us_ppm = 0.12 [1/µs/ppm]
a_c13_per_ms_ppm = 0.2
[photophysics]
kappa_35 = 1/7
";
        let cfg = Config::parse_str(text).unwrap();
        assert_eq!(cfg.bath.a_ns0, 0.12);
        assert!((cfg.bath.a_c13 - 2e-4).abs() < 1e-18);
        assert_eq!(cfg.photophysics.kappa_35, 1.0 / 7.0);
    }

    #[test]
    fn psi_out_of_range() {
        let err = Config::parse_str("ns0_ppm = 1\n\npsi = 1.3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("psi out of [0,1]"), "{msg}");
        assert!(matches!(err, Error::Config { line: 3, .. }));
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        for (text, line, needle) in [
            ("[bath]\nfoo = 1\n", 2, "unknown key"),
            ("ns0_ppm = 1 [kHz]\n", 1, "unit mismatch"),
            ("\n\nnv_ppm = lots\n", 3, "expected a number"),
            ("[nope]\n", 1, "unknown section"),
            ("psi = 0.1\npsi = 0.2\n", 2, "duplicate"),
            ("psi\n", 1, "key = value"),
        ] {
            match Config::parse_str(text) {
                Err(Error::Config { line: l, message }) => {
                    assert_eq!(l, line, "{text}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn cross_key_violation_is_rejected() {
        let err = Config::parse_str("ns0_ppm = 0.8\nnv_ppm = 2\n").unwrap_err();
        assert!(err.to_string().contains("NV exceeds nitrogen"), "{err}");
        assert!(Config::parse_str("[sensing]\ntau_policy = fixed\n").is_err());
        assert!(Config::parse_str("[sensing]\ntau_policy = fixed\ntau_us = 5\n").is_ok());
    }

    #[test]
    fn overrides() {
        let mut cfg = Config::default();
        cfg.apply_override("bath.a_ns0_per_us_ppm=0.2").unwrap();
        cfg.apply_override("psi=0.5").unwrap();
        assert_eq!((cfg.bath.a_ns0, cfg.sample.psi), (0.2, 0.5));
        let e = cfg.apply_override("sample.psi=1.3").unwrap_err();
        assert!(e.to_string().contains("psi out of [0,1]"));
        assert!(cfg.apply_override("bath.nothing=1").is_err());
        assert!(cfg.apply_override("no-equals").is_err());
    }
}
