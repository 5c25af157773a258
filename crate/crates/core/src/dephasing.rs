//! Ensemble dephasing budgets.
//!
//! T₂* is the reciprocal of a sum of independent dephasing rates: nitrogen
//! spin bath, ¹³C nuclear bath, NV–NV dipolar coupling, strain and bias-field
//! inhomogeneity. Bath terms are linear in the respective concentrations.
//! All rates are stored in µs⁻¹.

use serde::{Deserialize, Serialize, Serializer};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::units::{validate_sample, Concentration, DiamondSample};

/// A dephasing time that may be unbounded (zero total rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum T2Star {
    Finite(f64),
    Unbounded,
}

impl T2Star {
    pub fn from_rate(rate: f64) -> T2Star {
        if rate > 0.0 {
            T2Star::Finite(1.0 / rate)
        } else {
            T2Star::Unbounded
        }
    }

    pub fn rate(self) -> f64 {
        match self {
            T2Star::Finite(t) => 1.0 / t,
            T2Star::Unbounded => 0.0,
        }
    }

    /// The time in µs, `f64::INFINITY` when unbounded.
    pub fn as_f64(self) -> f64 {
        match self {
            T2Star::Finite(t) => t,
            T2Star::Unbounded => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            T2Star::Finite(t) => Some(t),
            T2Star::Unbounded => None,
        }
    }
}

impl std::fmt::Display for T2Star {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            T2Star::Finite(t) => write!(f, "{t:.3} us"),
            T2Star::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for T2Star {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            T2Star::Finite(t) => s.serialize_f64(*t),
            T2Star::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

/// Linear spin-bath scaling constants. Stored in µs⁻¹ ppm⁻¹; the ¹³C
/// constant is conventionally quoted per ms and converted on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathCoefficients {
    pub a_ns0: f64,
    pub a_c13: f64,
    pub a_nv_par: f64,
    pub a_nv_nonpar: f64,
    /// Residual polarization factor for NVs along the sensing axis.
    pub zeta_par: f64,
    /// Residual polarization factor for NVs along the other three axes.
    pub zeta_nonpar: f64,
}

impl Default for BathCoefficients {
    fn default() -> Self {
        BathCoefficients {
            a_ns0: 0.101,
            a_c13: BathCoefficients::per_ms_to_per_us(0.100),
            a_nv_par: 0.247,
            a_nv_nonpar: 0.165,
            zeta_par: 0.0,
            zeta_nonpar: 0.5,
        }
    }
}

impl BathCoefficients {
    pub fn per_ms_to_per_us(per_ms: f64) -> f64 {
        per_ms * 1e-3
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_ns0", self.a_ns0),
            ("a_c13", self.a_c13),
            ("a_nv_par", self.a_nv_par),
            ("a_nv_nonpar", self.a_nv_nonpar),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, z) in [
            ("zeta_par", self.zeta_par),
            ("zeta_nonpar", self.zeta_nonpar),
        ] {
            if !(0.0..=1.0).contains(&z) {
                return Err(Error::invalid(format!("{name} out of [0,1]: {z}")));
            }
        }
        Ok(())
    }
}

/// Per-mechanism dephasing rates (µs⁻¹) and the resulting total T₂*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DephasingBudget {
    pub rate_ns0: f64,
    pub rate_c13: f64,
    pub rate_nv_nv: f64,
    pub rate_strain: f64,
    pub rate_bias: f64,
    pub t2_star_total: T2Star,
}

impl DephasingBudget {
    /// Builds a budget from the five mechanism rates. Negative or
    /// non-finite rates are rejected.
    pub fn new(
        rate_ns0: f64,
        rate_c13: f64,
        rate_nv_nv: f64,
        rate_strain: f64,
        rate_bias: f64,
    ) -> Result<Self> {
        let total = combine_rates(&[rate_ns0, rate_c13, rate_nv_nv, rate_strain, rate_bias])?;
        Ok(DephasingBudget {
            rate_ns0,
            rate_c13,
            rate_nv_nv,
            rate_strain,
            rate_bias,
            t2_star_total: total,
        })
    }

    pub fn bath_rate(&self) -> f64 {
        self.rate_ns0 + self.rate_c13 + self.rate_nv_nv
    }

    pub fn total_rate(&self) -> f64 {
        self.bath_rate() + self.rate_strain + self.rate_bias
    }

    pub fn with_strain(self, rate_strain: f64) -> Result<Self> {
        Self::new(
            self.rate_ns0,
            self.rate_c13,
            self.rate_nv_nv,
            rate_strain,
            self.rate_bias,
        )
    }

    pub fn with_bias(self, rate_bias: f64) -> Result<Self> {
        Self::new(
            self.rate_ns0,
            self.rate_c13,
            self.rate_nv_nv,
            self.rate_strain,
            rate_bias,
        )
    }

    /// Per-term T₂* in the field order of the budget.
    pub fn term_t2(&self) -> [(&'static str, T2Star); 5] {
        [
            ("ns0", T2Star::from_rate(self.rate_ns0)),
            ("c13", T2Star::from_rate(self.rate_c13)),
            ("nv_nv", T2Star::from_rate(self.rate_nv_nv)),
            ("strain", T2Star::from_rate(self.rate_strain)),
            ("bias", T2Star::from_rate(self.rate_bias)),
        ]
    }
}

/// Harmonic combination of independent dephasing rates.
pub fn combine_rates(rates: &[f64]) -> Result<T2Star> {
    let mut sum = 0.0;
    for &r in rates {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::invalid(format!(
                "dephasing rate must be finite and >= 0, got {r}"
            )));
        }
        sum += r;
    }
    Ok(T2Star::from_rate(sum))
}

/// Post-treatment substitutional nitrogen: one N is consumed per NV⁰ and two
/// per NV⁻, so `[N⁰ₛ] = [N⁰ₛ]_grown − [NV](1+ψ)`.
pub fn nitrogen_bookkeeping(
    ns0_as_grown: Concentration,
    nv_total: Concentration,
    psi: f64,
) -> Result<Concentration> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::invalid(format!("psi out of [0,1]: {psi}")));
    }
    let consumed = nv_total.value() * (1.0 + psi);
    let remaining = ns0_as_grown.value() - consumed;
    if remaining < 0.0 {
        return Err(Error::invalid(format!(
            "nitrogen over-consumed: {} ppm as grown, {consumed} ppm bound in NV centers",
            ns0_as_grown.value()
        )));
    }
    Concentration::ppm(remaining)
}

/// Bath rates from post-treatment concentrations. `nv_minus` is split over
/// the sensing and non-sensing orientations by `sensing_fraction`.
pub fn spin_bath_rates(
    ns0_post: Concentration,
    c13: Concentration,
    nv_minus: Concentration,
    sensing_fraction: f64,
    coeffs: &BathCoefficients,
) -> Result<DephasingBudget> {
    coeffs.validate()?;
    if !(0.0..=1.0).contains(&sensing_fraction) {
        return Err(Error::invalid(format!(
            "sensing fraction out of [0,1]: {sensing_fraction}"
        )));
    }
    let nv_par = nv_minus.value() * sensing_fraction;
    let nv_nonpar = nv_minus.value() - nv_par;
    let rate_nv = coeffs.zeta_par * coeffs.a_nv_par * nv_par
        + coeffs.zeta_nonpar * coeffs.a_nv_nonpar * nv_nonpar;
    DephasingBudget::new(
        coeffs.a_ns0 * ns0_post.value(),
        coeffs.a_c13 * c13.value(),
        rate_nv,
        0.0,
        0.0,
    )
}

/// Spin-bath-limited budget of a treated sample. The nitrogen term uses the
/// post-treatment concentration from [`nitrogen_bookkeeping`].
pub fn spin_bath_budget(
    sample: &DiamondSample,
    coeffs: &BathCoefficients,
) -> Result<DephasingBudget> {
    let sample = validate_sample(*sample)?;
    let ns0_post = nitrogen_bookkeeping(
        sample.ns0_as_grown,
        sample.nv_total,
        sample.charge_fraction_psi,
    )?;
    spin_bath_rates(
        ns0_post,
        sample.c13,
        Concentration::ppm(sample.nv_minus())?,
        sample.sensing_fraction(),
        coeffs,
    )
}

/// Strain-limited dephasing rate from the FWHM (kHz) of the strain shift
/// distribution: `1/T₂*strain = πΔ`. Returned in µs⁻¹.
pub fn strain_rate_from_fwhm(fwhm_khz: f64) -> Result<f64> {
    if !(fwhm_khz.is_finite() && fwhm_khz >= 0.0) {
        return Err(Error::invalid(format!(
            "strain FWHM must be finite and >= 0, got {fwhm_khz} kHz"
        )));
    }
    Ok(PI * fwhm_khz * 1e-3)
}

pub fn strain_t2_from_fwhm(fwhm_khz: f64) -> Result<T2Star> {
    Ok(T2Star::from_rate(strain_rate_from_fwhm(fwhm_khz)?))
}

/// Double-quantum T₂*: twice the bath rate, with strain and bias terms
/// dropped.
pub fn dq_t2star(sq: &DephasingBudget) -> T2Star {
    T2Star::from_rate(2.0 * sq.bath_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ppm(x: f64) -> Concentration {
        Concentration::ppm(x).unwrap()
    }

    #[test]
    fn bath_limit_for_rounded_post_nitrogen() {
        // 0.35 ppm post-treatment nitrogen, 0.39 ppm NV at 20 % NV⁻.
        let b = spin_bath_rates(
            ppm(0.35),
            ppm(108.0),
            ppm(0.39 * 0.2),
            0.25,
            &BathCoefficients::default(),
        )
        .unwrap();
        let t2 = b.t2_star_total.finite().unwrap();
        assert!((t2 - 19.6).abs() < 0.05, "{t2}");
    }

    #[test]
    fn empty_bath_is_unbounded() {
        let s = DiamondSample::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let b = spin_bath_budget(&s, &BathCoefficients::default()).unwrap();
        assert_eq!(b.total_rate(), 0.0);
        assert_eq!(b.t2_star_total, T2Star::Unbounded);
        assert_eq!(dq_t2star(&b), T2Star::Unbounded);
    }

    #[test]
    fn carbon_only_bath() {
        let s = DiamondSample::new(0.0, 108.0, 0.0, 0.0).unwrap();
        let b = spin_bath_budget(&s, &BathCoefficients::default()).unwrap();
        assert!((b.rate_c13 - 0.0108).abs() < 1e-15);
        let t2 = b.t2_star_total.finite().unwrap();
        assert!((t2 - 92.5926).abs() < 1e-3);
    }

    #[test]
    fn bookkeeping_examples() {
        let post = nitrogen_bookkeeping(ppm(0.8), ppm(0.39), 0.2).unwrap();
        assert!((post.value() - 0.332).abs() < 1e-12);
        let none = nitrogen_bookkeeping(ppm(0.8), ppm(0.0), 0.7).unwrap();
        assert_eq!(none.value(), 0.8);
        let all_minus = nitrogen_bookkeeping(ppm(0.8), ppm(0.39), 1.0).unwrap();
        assert!((all_minus.value() - 0.02).abs() < 1e-12);
        let err = nitrogen_bookkeeping(ppm(0.5), ppm(0.39), 1.0).unwrap_err();
        assert!(err.to_string().contains("nitrogen over-consumed"));
    }

    #[test]
    fn strain_conversion() {
        let t = strain_t2_from_fwhm(31.0).unwrap().finite().unwrap();
        assert!((t - 10.268).abs() < 1e-3, "{t}");
        let t = strain_t2_from_fwhm(15.0).unwrap().finite().unwrap();
        assert!((t - 21.22).abs() < 1e-2, "{t}");
        assert_eq!(strain_rate_from_fwhm(0.0).unwrap(), 0.0);
        assert_eq!(strain_t2_from_fwhm(0.0).unwrap(), T2Star::Unbounded);
        assert!(strain_rate_from_fwhm(-1.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let t = combine_rates(&[1.0 / 20.0, 1.0 / 20.0]).unwrap();
        assert!((t.as_f64() - 10.0).abs() < 1e-12);
        let t = combine_rates(&[1.0 / 19.6, 1.0 / 212.0]).unwrap();
        assert!((t.as_f64() - 17.94).abs() < 0.01, "{t:?}");
        let t = combine_rates(&[1.0 / 7.0]).unwrap();
        assert!((t.as_f64() - 7.0).abs() < 1e-12);
        assert!(combine_rates(&[0.1, -0.01]).is_err());
    }

    #[test]
    fn dq_examples() {
        let sq = DephasingBudget::new(1.0 / 17.5, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((dq_t2star(&sq).as_f64() - 8.75).abs() < 1e-12);
        let with_strain = sq.with_strain(0.3).unwrap().with_bias(0.01).unwrap();
        assert_eq!(dq_t2star(&with_strain), dq_t2star(&sq));
    }

    proptest! {
        #[test]
        fn bath_monotone_in_concentrations(
            ns0 in 0.5f64..20.0, nvf in 0.0f64..0.4, psi in 0.0f64..1.0,
            c13 in 0.0f64..1e3, bump in 0.0f64..5.0, which in 0usize..3
        ) {
            let coeffs = BathCoefficients::default();
            let base = DiamondSample::new(ns0, c13, ns0 * nvf, psi).unwrap();
            let mut more = base;
            match which {
                0 => more.ns0_as_grown = ppm(ns0 + bump),
                1 => more.c13 = ppm(c13 + bump),
                _ => {
                    // raising NV consumes nitrogen, so hold post-treatment nitrogen fixed
                    let extra = bump.min(0.1);
                    more.nv_total = ppm(base.nv_total.value() + extra);
                    more.ns0_as_grown = ppm(ns0 + extra * (1.0 + psi));
                }
            }
            let a = spin_bath_budget(&base, &coeffs).unwrap().t2_star_total.as_f64();
            let b = spin_bath_budget(&more, &coeffs).unwrap().t2_star_total.as_f64();
            prop_assert!(b <= a * (1.0 + 1e-12));
        }

        #[test]
        fn harmonic_bound(rates in proptest::collection::vec(0.0f64..10.0, 1..6)) {
            let total = combine_rates(&rates).unwrap().as_f64();
            let min_term = rates.iter().map(|&r| T2Star::from_rate(r).as_f64()).fold(f64::INFINITY, f64::min);
            prop_assert!(total <= min_term);
        }

        #[test]
        fn combine_is_order_independent(mut rates in proptest::collection::vec(0.0f64..10.0, 2..6)) {
            let a = combine_rates(&rates).unwrap().rate();
            rates.reverse();
            let b = combine_rates(&rates).unwrap().rate();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn nitrogen_term_is_linear(n in 0.0f64..50.0, c13 in 0.0f64..500.0) {
            let coeffs = BathCoefficients::default();
            let one = spin_bath_rates(ppm(n), ppm(c13), ppm(0.0), 0.25, &coeffs).unwrap();
            let two = spin_bath_rates(ppm(2.0 * n), ppm(c13), ppm(0.0), 0.25, &coeffs).unwrap();
            prop_assert_eq!(two.rate_ns0, 2.0 * one.rate_ns0);
            prop_assert_eq!(two.rate_c13, one.rate_c13);
        }

        #[test]
        fn dq_is_half_sq_without_strain(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, r3 in 1e-6f64..1.0) {
            let sq = DephasingBudget::new(r1, r2, r3, 0.0, 0.0).unwrap();
            let dq = dq_t2star(&sq).as_f64();
            let half = sq.t2_star_total.as_f64() / 2.0;
            prop_assert!((dq - half).abs() <= 1e-12 * half);
        }

        #[test]
        fn bookkeeping_conserves_atoms(ns0 in 0.0f64..20.0, frac in 0.0f64..0.5, psi in 0.0f64..1.0) {
            let nv = ns0 * frac;
            let post = nitrogen_bookkeeping(ppm(ns0), ppm(nv), psi).unwrap().value();
            let back = post + nv * (1.0 + psi);
            prop_assert!((back - ns0).abs() <= 1e-12 * ns0.max(1e-300));
        }
    }
}
