//! Causal Butterworth low-pass as cascaded second-order sections, designed
//! by bilinear transform with the cutoff prewarped so the −3 dB point lands
//! exactly on `f_cut`.

use nalgebra::Complex;
use std::f64::consts::PI;

use crate::error::{Error, Result};

type Complex64 = Complex<f64>;

/// One section `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²)/(1 + a1 z⁻¹ + a2 z⁻²)`,
/// run in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    z1: f64,
    z2: f64,
}

impl Biquad {
    fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Biquad {
            b,
            a,
            z1: 0.0,
            z2: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z1;
        self.z1 = self.b[1] * x - self.a[0] * y + self.z2;
        self.z2 = self.b[2] * x - self.a[1] * y;
        y
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    sample_rate: f64,
    f_cut: f64,
    order: usize,
}

impl Butterworth {
    /// Designs an `order`-pole low-pass. `sample_rate` and `f_cut` share a
    /// unit (MHz for traces sampled in µs).
    pub fn lowpass(order: usize, f_cut: f64, sample_rate: f64) -> Result<Self> {
        if order == 0 || order > 16 {
            return Err(Error::invalid(format!(
                "filter order must be 1..=16, got {order}"
            )));
        }
        if !(f_cut > 0.0 && sample_rate > 2.0 * f_cut && sample_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "cutoff {f_cut} must lie below Nyquist of sample rate {sample_rate}"
            )));
        }
        let k = 2.0 * sample_rate;
        let wc = k * (PI * f_cut / sample_rate).tan();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // conjugate pole pair with real part −ωc·sin θ
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let a1 = 2.0 * wc * theta.sin();
            let a0 = wc * wc;
            let d0 = k * k + a1 * k + a0;
            let g = a0 / d0;
            sections.push(Biquad::new(
                [g, 2.0 * g, g],
                [(2.0 * a0 - 2.0 * k * k) / d0, (k * k - a1 * k + a0) / d0],
            ));
        }
        if order % 2 == 1 {
            let d0 = k + wc;
            let g = wc / d0;
            sections.push(Biquad::new([g, g, 0.0], [(wc - k) / d0, 0.0]));
        }
        Ok(Butterworth {
            sections,
            sample_rate,
            f_cut,
            order,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn f_cut(&self) -> f64 {
        self.f_cut
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.z1 = 0.0;
            s.z2 = 0.0;
        }
    }

    /// |H| of the realized digital filter at frequency `f`.
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / self.sample_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
            .norm()
    }
}

/// Analog Butterworth magnitude `1/√(1 + (f/f_c)^(2n))`.
pub fn analog_magnitude(order: usize, f_cut: f64, f: f64) -> f64 {
    1.0 / (1.0 + (f / f_cut).powi(2 * order as i32)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Steady-state amplitude of the filtered sinusoid, by projection on
    /// sin/cos over whole periods after the transient.
    fn realized_gain(order: usize, f_cut: f64, fs: f64, f: f64) -> f64 {
        let mut filt = Butterworth::lowpass(order, f_cut, fs).unwrap();
        let dt = 1.0 / fs;
        let periods = 400.0;
        let n = (periods / f * fs).round() as usize;
        let settle = n / 2;
        let (mut c, mut s, mut count) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let t = i as f64 * dt;
            let y = filt.process((2.0 * PI * f * t).sin());
            if i >= settle {
                c += y * (2.0 * PI * f * t).cos();
                s += y * (2.0 * PI * f * t).sin();
                count += 1.0;
            }
        }
        2.0 * (c * c + s * s).sqrt() / count
    }

    #[test]
    fn design_has_unit_dc_gain() {
        for order in 1..=8 {
            let f = Butterworth::lowpass(order, 1.7, 100.0).unwrap();
            assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn cutoff_is_minus_three_db() {
        let f = Butterworth::lowpass(4, 1.7, 50.0).unwrap();
        assert!((f.magnitude(1.7) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let g = realized_gain(4, 1.7, 50.0, 1.7);
        assert!(
            (g / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.02,
            "{g}"
        );
    }

    #[test]
    fn octave_above_cutoff_is_attenuated() {
        let g = realized_gain(4, 1.7, 50.0, 3.4);
        let db = -20.0 * g.log10();
        assert!(db >= 20.0, "{db} dB");
        // analytic reference: 1/√(1+2⁸) ≈ −24.1 dB
        let analog = -20.0 * analog_magnitude(4, 1.7, 3.4).log10();
        assert!((db - analog).abs() < 1.5, "{db} vs {analog}");
    }

    #[test]
    fn constant_passes_unchanged() {
        let mut f = Butterworth::lowpass(4, 1.7, 100.0).unwrap();
        let mut y = 0.0;
        for _ in 0..20_000 {
            y = f.process(0.37);
        }
        assert!((y - 0.37).abs() < 1e-6 * 0.37);
    }

    #[test]
    fn rejects_cutoff_above_nyquist() {
        assert!(Butterworth::lowpass(4, 1.7, 3.0).is_err());
        assert!(Butterworth::lowpass(0, 1.7, 30.0).is_err());
    }
}
