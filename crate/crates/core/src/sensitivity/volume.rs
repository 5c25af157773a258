//! Volume-normalized sensitivity of a sample as a function of optical
//! excitation intensity: the NV⁻ count in the shot-noise formula is replaced
//! by the NV⁻ number density along the sensing axis.

use serde::{Deserialize, Serialize};

use super::{
    optimal_tau, ramsey_sensitivity, IntensityRow, IntensityTable, SensingParams, TauDomain,
};
use crate::dephasing::{
    dq_t2star, spin_bath_budget, strain_rate_from_fwhm, BathCoefficients, T2Star,
};
use crate::error::{Error, Result};
use crate::optimize::Boundary;
use crate::units::{DiamondSample, Intensity, PhysicalConstants, CM3_PER_PPM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Sq,
    Dq,
}

impl Protocol {
    pub fn delta_ms(self) -> u8 {
        match self {
            Protocol::Sq => 1,
            Protocol::Dq => 2,
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sq" => Ok(Protocol::Sq),
            "dq" => Ok(Protocol::Dq),
            other => Err(Error::invalid(format!(
                "unknown protocol '{other}', expected sq or dq"
            ))),
        }
    }
}

/// Detected photon rate per NV⁻: anchored at `rate_at_1mw_kcps` for
/// 1 mW/µm² and shaped by the saturation curve s/(1+s), s = I/I_sat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonModel {
    pub rate_at_1mw_kcps: f64,
    pub i_sat: f64,
    /// Fixed readout window; when `None` the row's own readout column, or
    /// else its overhead time, is used.
    pub readout_us: Option<f64>,
}

impl Default for PhotonModel {
    fn default() -> Self {
        PhotonModel {
            rate_at_1mw_kcps: 30.0,
            i_sat: 2.0,
            readout_us: None,
        }
    }
}

impl PhotonModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_at_1mw_kcps > 0.0 && self.i_sat > 0.0) {
            return Err(Error::invalid("photon model rate and I_sat must be > 0"));
        }
        if let Some(w) = self.readout_us {
            if !(w > 0.0) {
                return Err(Error::invalid("readout window must be > 0"));
            }
        }
        Ok(())
    }

    /// Photon rate in kcps at `intensity` mW/µm².
    pub fn rate_kcps(&self, intensity: f64) -> f64 {
        let shape = |i: f64| {
            let s = i / self.i_sat;
            s / (1.0 + s)
        };
        self.rate_at_1mw_kcps * shape(intensity) / shape(1.0)
    }

    /// Photons per NV⁻ per readout for one operating point.
    pub fn n_avg(&self, row: &IntensityRow) -> f64 {
        let kcps = row
            .photon_rate_kcps
            .unwrap_or_else(|| self.rate_kcps(row.intensity));
        let window = self
            .readout_us
            .or(row.readout_us)
            .unwrap_or(row.t_overhead_us);
        // 1 kcps = 1e-3 photons per µs
        kcps * 1e-3 * window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "tau_us", rename_all = "snake_case")]
pub enum TauPolicy {
    /// Minimize over the free-precession time.
    Optimal,
    /// τ = T₂*, the operating point assumed by the simplified metric.
    EqualT2,
    Fixed(f64),
}

/// Everything besides the sample and its table that enters a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorSetup {
    pub constants: PhysicalConstants,
    pub bath: BathCoefficients,
    pub strain_fwhm_khz: f64,
    pub bias_rate_per_us: f64,
    pub photon: PhotonModel,
    pub stretch_p: f64,
    pub tau_policy: TauPolicy,
}

impl Default for SensorSetup {
    fn default() -> Self {
        SensorSetup {
            constants: PhysicalConstants::default(),
            bath: BathCoefficients::default(),
            strain_fwhm_khz: 0.0,
            bias_rate_per_us: 0.0,
            photon: PhotonModel::default(),
            stretch_p: 1.0,
            tau_policy: TauPolicy::Optimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeSensitivity {
    pub intensity: f64,
    /// T cm^(3/2) Hz^(-1/2)
    pub eta: f64,
    pub tau_us: f64,
    pub t2_star_us: f64,
    pub n_minus_sensing_ppm: f64,
    pub n_avg: f64,
    pub contrast: f64,
    pub t_overhead_us: f64,
    pub tau_boundary: Option<Boundary>,
}

fn protocol_t2(
    sample: &DiamondSample,
    row: &IntensityRow,
    protocol: Protocol,
    setup: &SensorSetup,
) -> Result<f64> {
    let measured = match protocol {
        Protocol::Sq => row.t2_sq_us,
        Protocol::Dq => row.t2_dq_us,
    };
    if let Some(t2) = measured {
        return Ok(t2);
    }
    let budget = spin_bath_budget(sample, &setup.bath)?
        .with_strain(strain_rate_from_fwhm(setup.strain_fwhm_khz)?)?
        .with_bias(setup.bias_rate_per_us)?;
    let t2 = match protocol {
        Protocol::Sq => budget.t2_star_total,
        Protocol::Dq => dq_t2star(&budget),
    };
    match t2 {
        T2Star::Finite(t) => Ok(t),
        T2Star::Unbounded => Err(Error::invalid(
            "sample has no dephasing: T2* unbounded, sensitivity has no optimum",
        )),
    }
}

/// Shot-noise sensitivity per unit √volume of `sample` at `intensity`.
pub fn volume_normalized_sensitivity(
    sample: &DiamondSample,
    table: &IntensityTable,
    intensity: Intensity,
    protocol: Protocol,
    setup: &SensorSetup,
) -> Result<VolumeSensitivity> {
    setup.constants.validate()?;
    setup.photon.validate()?;
    let row = table.at(intensity)?;
    let t2_us = protocol_t2(sample, &row, protocol, setup)?;

    let n_ppm = sample.nv_total.value() * row.psi * sample.sensing_fraction();
    if n_ppm <= 0.0 {
        return Err(Error::invalid(
            "no sensing NV- at this intensity (nv_total * psi is zero)",
        ));
    }
    let n_avg = setup.photon.n_avg(&row);

    // SI: seconds, cm⁻³, rad s⁻¹ T⁻¹
    let mut params = SensingParams {
        delta_ms: protocol.delta_ms(),
        gamma_e: setup.constants.angular_gamma_si(),
        n_sensors: n_ppm * CM3_PER_PPM,
        tau: t2_us * 1e-6,
        t2_star: t2_us * 1e-6,
        p: setup.stretch_p,
        contrast: row.contrast,
        n_avg,
        t_overhead: row.t_overhead_us * 1e-6,
    };
    let (tau, boundary) = match setup.tau_policy {
        TauPolicy::Optimal => {
            let opt = optimal_tau(&params, Some(TauDomain::for_t2(params.t2_star)?))?;
            (opt.tau, opt.boundary)
        }
        TauPolicy::EqualT2 => (params.t2_star, None),
        TauPolicy::Fixed(t) => (t * 1e-6, None),
    };
    params.tau = tau;
    let eta = ramsey_sensitivity(&params)?;
    Ok(VolumeSensitivity {
        intensity: intensity.value(),
        eta,
        tau_us: tau * 1e6,
        t2_star_us: t2_us,
        n_minus_sensing_ppm: n_ppm,
        n_avg,
        contrast: row.contrast,
        t_overhead_us: row.t_overhead_us,
        tau_boundary: boundary,
    })
}

/// η_a / η_b at one intensity; values above 1 favour sample b.
pub fn sensitivity_ratio(
    a: (&DiamondSample, &IntensityTable),
    b: (&DiamondSample, &IntensityTable),
    intensity: Intensity,
    protocol: Protocol,
    setup: &SensorSetup,
) -> Result<f64> {
    let ea = volume_normalized_sensitivity(a.0, a.1, intensity, protocol, setup)?;
    let eb = volume_normalized_sensitivity(b.0, b.1, intensity, protocol, setup)?;
    Ok(ea.eta / eb.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::{simplified_metric, MetricConfig};
    use crate::units::Concentration;

    fn low_n() -> DiamondSample {
        DiamondSample::new(0.8, 108.0, 0.39, 0.2).unwrap()
    }

    fn one_row(intensity: f64) -> IntensityTable {
        IntensityTable::new(vec![IntensityRow::new(intensity, 0.03, 0.8, 6.0)]).unwrap()
    }

    #[test]
    fn photon_model_is_anchored_at_one_mw() {
        let m = PhotonModel::default();
        assert!((m.rate_kcps(1.0) - 30.0).abs() < 1e-12);
        assert!(m.rate_kcps(0.1) < 3.0 * 1.6);
        assert!(m.rate_kcps(100.0) < 90.0);
    }

    #[test]
    fn identical_inputs_give_unit_ratio() {
        let t = IntensityTable::new(vec![
            IntensityRow::new(1e-3, 0.04, 0.4, 300.0),
            IntensityRow::new(1.0, 0.02, 0.2, 3.0),
        ])
        .unwrap();
        let s = low_n();
        for i in [1e-3, 0.01, 0.3, 1.0] {
            let r = sensitivity_ratio(
                (&s, &t),
                (&s, &t),
                Intensity::mw_per_um2(i).unwrap(),
                Protocol::Sq,
                &SensorSetup::default(),
            )
            .unwrap();
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn single_row_matches_hand_composition() {
        let setup = SensorSetup::default();
        let s = low_n();
        let v = volume_normalized_sensitivity(
            &s,
            &one_row(0.1),
            Intensity::mw_per_um2(0.1).unwrap(),
            Protocol::Sq,
            &setup,
        )
        .unwrap();

        // compose every factor by hand
        let t2_us = 1.0 / (0.101 * 0.332 + 1e-4 * 108.0 + 0.5 * 0.165 * 0.078 * 0.75);
        assert!((v.t2_star_us - t2_us).abs() < 1e-9);
        let s01 = 0.1 / 2.0;
        let rate_kcps = 30.0 * (s01 / (1.0 + s01)) / (0.5 / 1.5);
        let n_avg = rate_kcps * 1e-3 * 6.0;
        assert!((v.n_avg - n_avg).abs() < 1e-12);
        let n_cm3 = 0.39 * 0.8 * 0.25 * 1.76e17;
        let gamma = 2.0 * std::f64::consts::PI * 2.8024e10;
        let (tau, t2, t_o) = (v.tau_us * 1e-6, t2_us * 1e-6, 6e-6);
        let eta = 1.0 / gamma / (n_cm3 * tau).sqrt()
            * (tau / t2).exp()
            * (1.0 + 1.0 / (0.03f64.powi(2) * n_avg)).sqrt()
            * ((tau + t_o) / tau).sqrt();
        assert!((v.eta / eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extrapolation_is_an_error() {
        let r = volume_normalized_sensitivity(
            &low_n(),
            &one_row(0.1),
            Intensity::mw_per_um2(0.2).unwrap(),
            Protocol::Sq,
            &SensorSetup::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn swapping_samples_inverts_ratio() {
        let high = DiamondSample::new(14.0, 108.0, 3.0, 0.6).unwrap();
        let t = one_row(0.1);
        let i = Intensity::mw_per_um2(0.1).unwrap();
        let setup = SensorSetup::default();
        let ab = sensitivity_ratio((&low_n(), &t), (&high, &t), i, Protocol::Dq, &setup).unwrap();
        let ba = sensitivity_ratio((&high, &t), (&low_n(), &t), i, Protocol::Dq, &setup).unwrap();
        assert!((ab * ba - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerates_to_simplified_metric() {
        // ψ = 1, NV-NV coupling off, equal photon terms, τ = T₂*:
        // the ratio reduces to the simplified metric ratio when NV density
        // tracks post-treatment nitrogen.
        let setup = SensorSetup {
            bath: BathCoefficients {
                zeta_nonpar: 0.0,
                ..BathCoefficients::default()
            },
            tau_policy: TauPolicy::EqualT2,
            ..SensorSetup::default()
        };
        let t_o = 10.0;
        let t = IntensityTable::new(vec![IntensityRow::new(0.1, 0.03, 1.0, t_o)]).unwrap();
        let k = 0.1;
        let make = |post: f64| {
            let mut s = DiamondSample::new(post * (1.0 + 2.0 * k), 50.0, post * k, 1.0).unwrap();
            s.n_orientations_sensing = 1;
            s
        };
        let (a, b) = (make(14.0), make(0.8));
        let i = Intensity::mw_per_um2(0.1).unwrap();
        let ratio = sensitivity_ratio((&a, &t), (&b, &t), i, Protocol::Sq, &setup).unwrap();
        let cfg = MetricConfig {
            t_overhead: t_o,
            ..MetricConfig::default()
        };
        let simple = simplified_metric(Concentration::ppm(14.0).unwrap(), &cfg).unwrap()
            / simplified_metric(Concentration::ppm(0.8).unwrap(), &cfg).unwrap();
        assert!((ratio - simple).abs() < 1e-9, "{ratio} vs {simple}");
    }

    #[test]
    fn dq_beats_sq_when_overhead_dominates() {
        // strain-free, t_O ≫ T₂*: 2× gyromagnetic gain outweighs the halved T₂*
        let t = IntensityTable::new(vec![IntensityRow::new(0.1, 0.03, 0.5, 2000.0)]).unwrap();
        let i = Intensity::mw_per_um2(0.1).unwrap();
        let setup = SensorSetup::default();
        let sq = volume_normalized_sensitivity(&low_n(), &t, i, Protocol::Sq, &setup).unwrap();
        let dq = volume_normalized_sensitivity(&low_n(), &t, i, Protocol::Dq, &setup).unwrap();
        assert!(dq.eta / sq.eta < 1.0);
        assert!((dq.t2_star_us - sq.t2_star_us / 2.0).abs() < 1e-9);
    }
}
