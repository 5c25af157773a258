//! Five-level NV population model.
//!
//! States: 1 = ground mₛ=0, 2 = ground mₛ=±1, 3 = excited mₛ=0,
//! 4 = excited mₛ=±1, 5 = metastable singlet. Optical pumping drives
//! 1→3 and 2→4 at sΓ; excited states decay radiatively at Γ and into the
//! singlet at κ₃₅Γ, κ₄₅Γ; the singlet empties into 1 and 2 at κ₅₁Γ, κ₅₂Γ.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveLevelParams {
    /// Spin-conserving radiative decay rate Γ, µs⁻¹.
    pub gamma: f64,
    pub kappa_45: f64,
    pub kappa_35: f64,
    pub kappa_52: f64,
    pub kappa_51: f64,
    /// Bounds of the saturation intensity, mW/µm².
    pub i_sat_band: (f64, f64),
}

impl Default for FiveLevelParams {
    fn default() -> Self {
        FiveLevelParams {
            gamma: 0.67,
            kappa_45: 1.0,
            kappa_35: 1.0 / 7.0,
            kappa_52: 1.0 / 50.0,
            kappa_51: 1.0 / 25.0,
            i_sat_band: (1.0, 3.0),
        }
    }
}

impl FiveLevelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("kappa_45", self.kappa_45),
            ("kappa_35", self.kappa_35),
            ("kappa_52", self.kappa_52),
            ("kappa_51", self.kappa_51),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        let (lo, hi) = self.i_sat_band;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "saturation intensity band must satisfy 0 < lower <= upper, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// Largest decay coefficient in units of Γ, including the pump s.
    pub fn stiffness(&self, s: f64) -> f64 {
        [
            1.0,
            s,
            1.0 + self.kappa_35,
            1.0 + self.kappa_45,
            self.kappa_51 + self.kappa_52,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest output step accepted by [`super::evolve`].
    pub fn max_dt(&self, s: f64) -> f64 {
        0.01 / (self.gamma * self.stiffness(s))
    }

    /// Generator `M` of dn/dt = M n for saturation parameter `s`.
    pub fn rate_matrix(&self, s: f64) -> Matrix5<f64> {
        let g = self.gamma;
        let (k35, k45, k51, k52) = (self.kappa_35, self.kappa_45, self.kappa_51, self.kappa_52);
        #[rustfmt::skip]
        let m = Matrix5::new(
            -s,  0.0, 1.0,        0.0,        k51,
            0.0, -s,  0.0,        1.0,        k52,
            s,   0.0, -(1.0 + k35), 0.0,      0.0,
            0.0, s,   0.0,        -(1.0 + k45), 0.0,
            0.0, 0.0, k35,        k45,        -(k51 + k52),
        );
        m * g
    }

    /// Stationary populations under continuous pumping, `s > 0`.
    pub fn steady_state(&self, s: f64) -> Result<StateVector> {
        if !(s > 0.0) {
            return Err(Error::invalid(
                "steady state is not unique without optical pumping (s = 0)",
            ));
        }
        let mut a = self.rate_matrix(s);
        for j in 0..5 {
            a[(4, j)] = 1.0;
        }
        let rhs = Vector5::new(0.0, 0.0, 0.0, 0.0, 1.0);
        let x = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::computation("rate matrix is singular"))?;
        Ok(StateVector(x.into()))
    }

    /// Slowest non-zero relaxation rate (µs⁻¹) of the populations.
    pub fn slowest_rate(&self, s: f64) -> f64 {
        let m = self.rate_matrix(s);
        let scale = self.gamma * self.stiffness(s);
        m.complex_eigenvalues()
            .iter()
            .map(|z| -z.re)
            .filter(|&r| r > 1e-12 * scale)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Populations n₁…n₅.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub [f64; 5]);

impl StateVector {
    /// All population in ground mₛ = 0.
    pub const MS0: StateVector = StateVector([1.0, 0.0, 0.0, 0.0, 0.0]);
    /// All population in ground mₛ = ±1.
    pub const MS1: StateVector = StateVector([0.0, 1.0, 0.0, 0.0, 0.0]);

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&n| !(-1e-12..=1.0 + 1e-12).contains(&n)) {
            return Err(Error::invalid(format!(
                "populations must lie in [0,1]: {:?}",
                self.0
            )));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "populations must sum to 1, got {}",
                self.total()
            )));
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes cᵢ
// are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State = [f64; 5];

#[inline(always)]
fn apply(m: &[[f64; 5]; 5], y: &State) -> State {
    let mut out = [0.0; 5];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * y[0] + row[1] * y[1] + row[2] * y[2] + row[3] * y[3] + row[4] * y[4];
    }
    out
}

#[inline(always)]
fn combo(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for &(c, k) in terms {
        for i in 0..5 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Adaptive Dormand–Prince integration of dn/dt = M n, reporting the state
/// on a uniform output grid.
pub(crate) struct Propagator {
    m: [[f64; 5]; 5],
    rtol: f64,
    atol: f64,
    h: f64,
}

impl Propagator {
    pub(crate) fn new(matrix: &Matrix5<f64>, dt: f64) -> Self {
        let mut m = [[0.0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = matrix[(i, j)];
            }
        }
        Propagator {
            m,
            rtol: 1e-10,
            atol: 1e-14,
            h: dt,
        }
    }

    /// Advances `y` by exactly `dt`, subdividing as the error control
    /// requires.
    pub(crate) fn advance(&mut self, y: &mut State, dt: f64) {
        let mut remaining = dt;
        let mut k1 = apply(&self.m, y);
        while remaining > 0.0 {
            let h = self.h.min(remaining);
            let k2 = apply(&self.m, &combo(y, h, &[(A21, &k1)]));
            let k3 = apply(&self.m, &combo(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = apply(&self.m, &combo(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = apply(
                &self.m,
                &combo(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = apply(
                &self.m,
                &combo(
                    y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            );
            let y5 = combo(
                y,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = apply(&self.m, &y5);
            let mut err = 0.0f64;
            for i in 0..5 {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((e / sc).abs());
            }
            if err <= 1.0 {
                *y = y5;
                k1 = k7;
                remaining -= h;
                if remaining < 1e-12 * dt {
                    remaining = 0.0;
                }
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = (h * grow).min(dt);
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
    }
}

/// One-step transition map `Φ = exp(M dt)` built by integrating the unit
/// vectors; columns are corrected to sum to one exactly.
pub(crate) fn transition_matrix(matrix: &Matrix5<f64>, dt: f64) -> [[f64; 5]; 5] {
    let mut phi = [[0.0; 5]; 5];
    for j in 0..5 {
        let mut y = [0.0; 5];
        y[j] = 1.0;
        Propagator::new(matrix, dt).advance(&mut y, dt);
        let drift: f64 = y.iter().sum::<f64>() - 1.0;
        y[j] -= drift;
        for i in 0..5 {
            phi[i][j] = y[i];
        }
    }
    phi
}

#[inline(always)]
pub(crate) fn step(phi: &[[f64; 5]; 5], y: &[f64; 5]) -> [f64; 5] {
    apply(phi, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_columns_sum_to_zero() {
        let p = FiveLevelParams::default();
        for s in [0.0, 0.3, 10.0] {
            let m = p.rate_matrix(s);
            for j in 0..5 {
                let col: f64 = (0..5).map(|i| m[(i, j)]).sum();
                assert!(col.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn steady_state_is_stationary_and_polarized() {
        let p = FiveLevelParams::default();
        let ss = p.steady_state(0.1).unwrap();
        let v = Vector5::from(ss.0);
        assert!((p.rate_matrix(0.1) * v).amax() < 1e-15);
        assert!((ss.total() - 1.0).abs() < 1e-14);
        assert!(ss.0[0] > 5.0 * ss.0[1]);
        assert!(p.steady_state(0.0).is_err());
    }

    #[test]
    fn propagator_matches_matrix_exponential() {
        let p = FiveLevelParams::default();
        let m = p.rate_matrix(1.0);
        let dt = p.max_dt(1.0);
        let mut y = StateVector::MS1.0;
        let mut prop = Propagator::new(&m, dt);
        let n = 2000;
        for _ in 0..n {
            prop.advance(&mut y, dt);
        }
        let exact = (m * (n as f64 * dt)).exp() * Vector5::from(StateVector::MS1.0);
        for i in 0..5 {
            assert!(
                (y[i] - exact[i]).abs() < 1e-11,
                "{i}: {} vs {}",
                y[i],
                exact[i]
            );
        }
    }

    #[test]
    fn slow_rate_tracks_pumping_at_low_intensity() {
        let p = FiveLevelParams::default();
        let s = 1e-3;
        // each excitation repolarizes with probability ~1/3 from mₛ=±1
        // and depolarizes with ~1/24 from mₛ=0
        let expected = s * p.gamma * (1.0 / 3.0 + 1.0 / 24.0);
        let got = p.slowest_rate(s);
        assert!((got / expected - 1.0).abs() < 0.01, "{got} vs {expected}");
    }
}
