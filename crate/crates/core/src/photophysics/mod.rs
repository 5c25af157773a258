//! Five-level rate-equation simulation of NV optical spin initialization,
//! the PL readout chain, and initialization time versus laser intensity.

pub mod butterworth;
mod model;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::Intensity;
use butterworth::Butterworth;
pub use model::{FiveLevelParams, StateVector};

/// Default readout filter: 4th order, −3 dB at 1.7 MHz.
pub const FILTER_ORDER: usize = 4;
pub const FILTER_CUTOFF_MHZ: f64 = 1.7;

/// Populations sampled on the uniform grid `t = i·dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub s: f64,
    pub dt: f64,
    pub params: FiveLevelParams,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |i| i as f64 * self.dt)
    }

    /// Largest `|Σnᵢ − 1|` along the trajectory.
    pub fn max_conservation_error(&self) -> f64 {
        self.states
            .iter()
            .map(|n| (n.total() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceMeta {
    pub s: f64,
    pub params: FiveLevelParams,
    pub filtered: bool,
    pub dt: f64,
}

/// PL emission rate (µs⁻¹) on a uniform time grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PLTrace {
    pub values: Vec<f64>,
    pub meta: TraceMeta,
}

impl PLTrace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.meta.dt)
    }
}

fn check_run(params: &FiveLevelParams, s: f64, t_end: f64, dt: f64) -> Result<usize> {
    params.validate()?;
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::invalid(format!(
            "saturation parameter must be >= 0, got {s}"
        )));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::invalid(format!("t_end must be > 0, got {t_end}")));
    }
    let required = params.max_dt(s);
    if !(dt > 0.0 && dt <= required) {
        return Err(Error::invalid(format!(
            "output step dt = {dt} us too coarse for s = {s}; required dt <= {required:.6e} us"
        )));
    }
    Ok((t_end / dt - 1e-9).ceil() as usize)
}

/// Integrates the population equations from `initial` to `t_end` (µs),
/// reporting every `dt`.
pub fn evolve(
    params: &FiveLevelParams,
    s: f64,
    initial: StateVector,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let steps = check_run(params, s, t_end, dt)?;
    initial.validate()?;
    let phi = model::transition_matrix(&params.rate_matrix(s), dt);
    let mut y = initial.0;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial);
    for _ in 0..steps {
        y = model::step(&phi, &y);
        states.push(StateVector(y));
    }
    Ok(Trajectory {
        s,
        dt,
        params: *params,
        states,
    })
}

/// `R(t) = Γ(n₃ + n₄)`.
pub fn pl_rate(trajectory: &Trajectory) -> PLTrace {
    let g = trajectory.params.gamma;
    PLTrace {
        values: trajectory
            .states
            .iter()
            .map(|n| g * (n.0[2] + n.0[3]))
            .collect(),
        meta: TraceMeta {
            s: trajectory.s,
            params: trajectory.params,
            filtered: false,
            dt: trajectory.dt,
        },
    }
}

fn readout_filter(order: usize, f_cut: f64, dt: f64) -> Result<Butterworth> {
    let fs = 1.0 / dt;
    if fs < 10.0 * f_cut {
        return Err(Error::invalid(format!(
            "trace undersampled: sample rate {fs} MHz below 10 x cutoff {f_cut} MHz"
        )));
    }
    Butterworth::lowpass(order, f_cut, fs)
}

/// Causal Butterworth low-pass of a PL trace (`f_cut` in MHz).
pub fn lowpass(trace: &PLTrace, order: usize, f_cut: f64) -> Result<PLTrace> {
    let mut filt = readout_filter(order, f_cut, trace.meta.dt)?;
    Ok(PLTrace {
        values: trace.values.iter().map(|&x| filt.process(x)).collect(),
        meta: TraceMeta {
            filtered: true,
            ..trace.meta
        },
    })
}

/// Filtered Sig/Ref PL and their ratio versus delay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastCurve {
    pub s: f64,
    pub t_us: Vec<f64>,
    pub sig: Vec<f64>,
    pub reference: Vec<f64>,
    pub contrast: Vec<f64>,
}

impl ContrastCurve {
    pub fn len(&self) -> usize {
        self.t_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_us.is_empty()
    }
}

/// Runs the pulse protocol for two initial spin states under the same
/// pump, streaming integration, PL and filtering, and keeps every
/// `stride`-th sample.
pub fn protocol_curve(
    params: &FiveLevelParams,
    s: f64,
    sig_initial: StateVector,
    ref_initial: StateVector,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<ContrastCurve> {
    let steps = check_run(params, s, t_end, dt)?;
    sig_initial.validate()?;
    ref_initial.validate()?;
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let phi = model::transition_matrix(&params.rate_matrix(s), dt);
    let mut f_sig = readout_filter(FILTER_ORDER, FILTER_CUTOFF_MHZ, dt)?;
    let mut f_ref = f_sig.clone();
    let (mut ys, mut yr) = (sig_initial.0, ref_initial.0);
    let g = params.gamma;
    // Ref below this level is treated as dark and the ratio set to 1.
    let floor = 1e-12 * g;
    let n_out = steps / stride + 1;
    let mut curve = ContrastCurve {
        s,
        t_us: Vec::with_capacity(n_out),
        sig: Vec::with_capacity(n_out),
        reference: Vec::with_capacity(n_out),
        contrast: Vec::with_capacity(n_out),
    };
    for i in 0..=steps {
        if i > 0 {
            ys = model::step(&phi, &ys);
            yr = model::step(&phi, &yr);
        }
        let ps = f_sig.process(g * (ys[2] + ys[3]));
        let pr = f_ref.process(g * (yr[2] + yr[3]));
        if i % stride == 0 {
            curve.t_us.push(i as f64 * dt);
            curve.sig.push(ps);
            curve.reference.push(pr);
            curve
                .contrast
                .push(if pr.abs() > floor { ps / pr } else { 1.0 });
        }
    }
    Ok(curve)
}

/// Contrast versus delay for the spin-initialization protocol: Sig starts
/// in mₛ = ±1, Ref in mₛ = 0, both pumped at `s = I/I_sat`.
pub fn contrast_trace(
    params: &FiveLevelParams,
    intensity: Intensity,
    i_sat: Intensity,
    t_end: f64,
    dt: f64,
) -> Result<ContrastCurve> {
    let s = intensity.saturation(i_sat);
    protocol_curve(params, s, StateVector::MS1, StateVector::MS0, t_end, dt, 1)
}

/// Delay at which `|1 − contrast|` has decayed to `e⁻³` of its peak,
/// from an exponential fitted to the post-peak decay.
pub fn initialization_time(t_us: &[f64], contrast: &[f64]) -> Result<f64> {
    if t_us.len() != contrast.len() || t_us.len() < 3 {
        return Err(Error::invalid("contrast curve needs >= 3 matching samples"));
    }
    let dev: Vec<f64> = contrast.iter().map(|c| (1.0 - c).abs()).collect();
    let n = dev.len();
    let smooth = |i: usize| {
        if i == 0 || i + 1 == n {
            dev[i]
        } else {
            (dev[i - 1] + dev[i] + dev[i + 1]) / 3.0
        }
    };
    let coarse = (0..n)
        .max_by(|&a, &b| smooth(a).total_cmp(&smooth(b)))
        .expect("non-empty");
    // the smoothed maximum locates the peak; the raw samples pin it
    let peak = (coarse.saturating_sub(1)..(coarse + 2).min(n))
        .max_by(|&a, &b| dev[a].total_cmp(&dev[b]))
        .expect("non-empty");
    let d_peak = dev[peak];
    if !(smooth(coarse) > 1e-6 && d_peak > 0.0) {
        return Err(Error::computation(
            "no polarization dynamics at this intensity",
        ));
    }
    let end = (peak + 1..n)
        .find(|&i| dev[i] < 0.01 * d_peak)
        .ok_or_else(|| {
            Error::computation("contrast did not relax below 1% of its peak; extend t_end")
        })?;
    // least squares ln d = c0 + c1 (t − t_peak) over [peak, end)
    let t0 = t_us[peak];
    let pts: Vec<(f64, f64)> = (peak..end)
        .filter(|&i| dev[i] > 0.0)
        .map(|i| (t_us[i] - t0, dev[i].ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::computation("too few samples in the post-peak decay"));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.0 - mx).powi(2), b + (p.0 - mx) * (p.1 - my))
    });
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::computation("post-peak deviation is not decaying"));
    }
    let c0 = my - slope * mx;
    let tau = -1.0 / slope;
    Ok(t0 + tau * (3.0 + c0 - d_peak.ln()))
}

/// Simulated duration (µs) long enough for the slowest mode to decay by
/// e⁻⁷ at saturation parameter `s`.
pub fn default_run_length(params: &FiveLevelParams, s: f64) -> f64 {
    7.0 / params.slowest_rate(s) + 50.0
}

const MAX_CURVE_POINTS: usize = 200_000;

/// `t_I` from a simulated contrast curve at saturation parameter `s`.
pub fn initialization_time_at(params: &FiveLevelParams, s: f64) -> Result<f64> {
    let dt = params.max_dt(s).min(0.1 / FILTER_CUTOFF_MHZ);
    let t_end = default_run_length(params, s);
    let steps = (t_end / dt).ceil() as usize;
    let stride = steps.div_ceil(MAX_CURVE_POINTS).max(1);
    let c = protocol_curve(
        params,
        s,
        StateVector::MS1,
        StateVector::MS0,
        t_end,
        dt,
        stride,
    )?;
    initialization_time(&c.t_us, &c.contrast)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiBand {
    pub intensity: Vec<f64>,
    /// `t_I` at the lower saturation intensity (stronger pumping).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Initialization time over an intensity grid at both ends of the
/// saturation-intensity band, evaluated in parallel.
pub fn ti_band(params: &FiveLevelParams, intensities: &[Intensity]) -> Result<TiBand> {
    params.validate()?;
    let (lo, hi) = params.i_sat_band;
    let jobs: Vec<(usize, f64)> = intensities
        .iter()
        .flat_map(|i| [(0, i.value() / lo), (1, i.value() / hi)])
        .collect();
    let out: Vec<f64> = jobs
        .par_iter()
        .map(|&(_, s)| initialization_time_at(params, s))
        .collect::<Result<_>>()?;
    Ok(TiBand {
        intensity: intensities.iter().map(|i| i.value()).collect(),
        lower: out.iter().step_by(2).copied().collect(),
        upper: out.iter().skip(1).step_by(2).copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> FiveLevelParams {
        FiveLevelParams::default()
    }

    #[test]
    fn dark_state_is_stationary() {
        let tr = evolve(&p(), 0.0, StateVector::MS0, 10.0, 0.005).unwrap();
        assert!(tr.states.iter().all(|n| *n == StateVector::MS0));
        assert!(pl_rate(&tr).values.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn populations_are_conserved() {
        for s in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
            let dt = p().max_dt(s);
            let tr = evolve(&p(), s, StateVector::MS1, 100.0, dt).unwrap();
            assert!(tr.max_conservation_error() < 1e-9, "s={s}");
            assert!(tr.states.iter().flat_map(|n| n.0).all(|x| x >= -1e-12));
        }
    }

    #[test]
    fn relaxes_to_polarized_steady_state() {
        let s = 0.1;
        let ss = p().steady_state(s).unwrap();
        let t_end = 10.0 / p().slowest_rate(s);
        let tr = evolve(&p(), s, StateVector::MS1, t_end, p().max_dt(s)).unwrap();
        let last = tr.states.last().unwrap();
        for i in 0..5 {
            assert!((last.0[i] - ss.0[i]).abs() < 1e-4, "{i}");
        }
        // mₛ=0 : mₛ=±1 → (1/3)/(1/24) = 8 at weak pumping
        assert!(last.0[0] > 5.0 * last.0[1]);
        let from_other = evolve(&p(), s, StateVector::MS0, t_end, p().max_dt(s)).unwrap();
        let other = from_other.states.last().unwrap();
        for i in 0..5 {
            assert!((last.0[i] - other.0[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn steady_pl_matches_null_space() {
        let s = 1.0;
        let ss = p().steady_state(s).unwrap();
        let t_end = 25.0 / p().slowest_rate(s);
        let tr = evolve(&p(), s, StateVector::MS0, t_end, p().max_dt(s)).unwrap();
        let r = *pl_rate(&tr).values.last().unwrap();
        let expected = p().gamma * (ss.0[2] + ss.0[3]);
        assert!((r / expected - 1.0).abs() < 1e-5, "{r} vs {expected}");
    }

    #[test]
    fn halving_dt_is_converged() {
        let s = 2.0;
        let dt = p().max_dt(s);
        let a = evolve(&p(), s, StateVector::MS1, 20.0, dt).unwrap();
        let b = evolve(&p(), s, StateVector::MS1, 20.0, dt / 2.0).unwrap();
        let (ya, yb) = (a.states.last().unwrap(), b.states.last().unwrap());
        for i in 0..5 {
            assert!((ya.0[i] - yb.0[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn coarse_step_names_requirement() {
        let err = evolve(&p(), 1.0, StateVector::MS0, 1.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("required dt <="), "{err}");
    }

    #[test]
    fn pl_is_gamma_times_excited_population() {
        let tr = Trajectory {
            s: 1.0,
            dt: 0.01,
            params: p(),
            states: vec![StateVector([0.9, 0.0, 0.05, 0.05, 0.0]); 4],
        };
        assert!(pl_rate(&tr)
            .values
            .iter()
            .all(|&r| (r - 0.067).abs() < 1e-15));
    }

    #[test]
    fn lowpass_flags_and_refuses_undersampling() {
        let trace = PLTrace {
            values: vec![0.5; 5000],
            meta: TraceMeta {
                s: 1.0,
                params: p(),
                filtered: false,
                dt: 0.005,
            },
        };
        let f = lowpass(&trace, 4, 1.7).unwrap();
        assert!(f.meta.filtered);
        assert!((f.values.last().unwrap() - 0.5).abs() < 1e-6);
        let coarse = PLTrace {
            meta: TraceMeta {
                dt: 0.1,
                ..trace.meta
            },
            ..trace
        };
        assert!(lowpass(&coarse, 4, 1.7).is_err());
    }

    #[test]
    fn identical_states_give_unit_contrast() {
        let c = protocol_curve(
            &p(),
            1.0,
            StateVector::MS0,
            StateVector::MS0,
            20.0,
            0.005,
            1,
        )
        .unwrap();
        assert!(c.contrast.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn contrast_dips_then_recovers() {
        let i = Intensity::mw_per_um2(1.0).unwrap();
        let isat = Intensity::mw_per_um2(1.0).unwrap();
        let t_end = 10.0 / p().slowest_rate(1.0);
        let c = contrast_trace(&p(), i, isat, t_end, p().max_dt(1.0)).unwrap();
        let min = c.contrast.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min < 0.9, "{min}");
        assert!((c.contrast.last().unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn exact_exponential_gives_three_time_constants() {
        let (t_peak, tau, d0) = (2.0, 5.0, 0.3);
        let t: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
        let c: Vec<f64> = t
            .iter()
            .map(|&t| {
                let d = if t < t_peak {
                    d0 * t / t_peak
                } else {
                    d0 * (-(t - t_peak) / tau).exp()
                };
                1.0 - d
            })
            .collect();
        let t_i = initialization_time(&t, &c).unwrap();
        assert!((t_i - (t_peak + 3.0 * tau)).abs() < 1e-9, "{t_i}");
    }

    #[test]
    fn flat_curve_has_no_dynamics() {
        let t: Vec<f64> = (0..100).map(f64::from).collect();
        let err = initialization_time(&t, &vec![1.0; 100]).unwrap_err();
        assert!(err.to_string().contains("no polarization dynamics"));
    }

    #[test]
    fn band_is_ordered_and_positive_at_saturation() {
        let grid: Vec<Intensity> = [0.3, 1.0, 3.0]
            .iter()
            .map(|&x| Intensity::mw_per_um2(x).unwrap())
            .collect();
        let band = ti_band(&p(), &grid).unwrap();
        for k in 0..grid.len() {
            assert!(band.lower[k] <= band.upper[k], "{k}: {band:?}");
            assert!(band.lower[k] > 0.0 && band.lower[k].is_finite());
        }
    }
}
