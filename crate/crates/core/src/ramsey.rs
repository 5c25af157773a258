//! Ramsey free-induction decays: a stretched-exponential envelope on
//! equally weighted hyperfine lines, plus a deterministic fitter.
//!
//! ```text
//! S(τ) = b + A·exp(−(τ/T₂*)^p)·(1/n)·Σⱼ cos(2π(δ + j·a)τ + φⱼ)
//! ```
//!
//! with `j` running over `n` values centered on zero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmConfig, LmFit, Residuals};

/// ¹⁴N hyperfine splitting of the NV ground state, MHz.
pub const N14_HYPERFINE_MHZ: f64 = 2.16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyModel {
    /// µs
    pub t2_star: f64,
    pub p: f64,
    /// MHz
    pub detuning: f64,
    /// MHz
    pub hyperfine_splitting: f64,
    pub n_hyperfine: usize,
    pub amplitude: f64,
    pub baseline: f64,
    /// One phase per line (radians); empty means all zero.
    pub phases: Vec<f64>,
}

impl Default for RamseyModel {
    fn default() -> Self {
        RamseyModel {
            t2_star: 17.7,
            p: 1.0,
            detuning: 0.4,
            hyperfine_splitting: N14_HYPERFINE_MHZ,
            n_hyperfine: 3,
            amplitude: 0.02,
            baseline: 1.0,
            phases: Vec::new(),
        }
    }
}

/// Offsets `j` of the lines, centered on zero.
fn line_offsets(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| k as f64 - (n as f64 - 1.0) / 2.0)
}

impl RamseyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.t2_star.is_finite() && self.t2_star > 0.0) {
            return Err(Error::invalid(format!(
                "T2* must be > 0, got {}",
                self.t2_star
            )));
        }
        if !(0.5..=3.0).contains(&self.p) {
            return Err(Error::invalid(format!(
                "p must lie in [0.5, 3], got {}",
                self.p
            )));
        }
        if self.n_hyperfine == 0 {
            return Err(Error::invalid("n_hyperfine must be >= 1"));
        }
        if !self.phases.is_empty() && self.phases.len() != self.n_hyperfine {
            return Err(Error::invalid(format!(
                "{} phases given for {} lines",
                self.phases.len(),
                self.n_hyperfine
            )));
        }
        let finite = [
            self.detuning,
            self.hyperfine_splitting,
            self.amplitude,
            self.baseline,
        ]
        .iter()
        .chain(&self.phases)
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("Ramsey model has non-finite parameters"));
        }
        Ok(())
    }

    /// Signed line frequencies `δ + j·a`, MHz.
    pub fn line_frequencies(&self) -> Vec<f64> {
        line_offsets(self.n_hyperfine)
            .map(|j| self.detuning + j * self.hyperfine_splitting)
            .collect()
    }

    fn phase(&self, k: usize) -> f64 {
        self.phases.get(k).copied().unwrap_or(0.0)
    }

    pub fn envelope(&self, tau: f64) -> f64 {
        (-(tau / self.t2_star).powf(self.p)).exp()
    }

    pub fn evaluate(&self, tau: f64) -> f64 {
        let n = self.n_hyperfine as f64;
        let beat: f64 = self
            .line_frequencies()
            .iter()
            .enumerate()
            .map(|(k, f)| (TAU * f * tau + self.phase(k)).cos())
            .sum();
        self.baseline + self.amplitude * self.envelope(tau) * beat / n
    }
}

/// A sampled Ramsey signal; `seed` and `noise_sigma` record how a
/// synthetic one was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseySignal {
    pub tau_us: Vec<f64>,
    pub signal: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: Option<u64>,
}

fn check_grid(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::invalid("empty delay grid"));
    }
    if tau.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("delays must be finite and >= 0"));
    }
    if let Some(w) = tau.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "delay grid not strictly increasing at sample {}",
            w + 2
        )));
    }
    Ok(())
}

/// `n` delays `0, dt, …, (n−1)·dt`.
pub fn uniform_grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt).collect()
}

/// Samples `model` on `tau` and adds Gaussian noise of standard deviation
/// `noise_sigma`, reproducibly from `seed`.
pub fn synthesize(
    model: &RamseyModel,
    tau: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<RamseySignal> {
    model.validate()?;
    check_grid(tau)?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let mut signal: Vec<f64> = tau.iter().map(|&t| model.evaluate(t)).collect();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for s in &mut signal {
            *s += rng.sample(normal);
        }
    }
    Ok(RamseySignal {
        tau_us: tau.to_vec(),
        signal,
        noise_sigma,
        seed: Some(seed),
    })
}

#[derive(Debug, Clone, Default)]
pub struct FitConfig {
    /// Number of hyperfine lines in the fitted model; 3 when `None`.
    pub n_hyperfine: Option<usize>,
    /// Skips the automatic initialization when given.
    pub initial: Option<RamseyModel>,
    pub lm: LmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    /// `17.7(4)` notation with a one-digit uncertainty.
    pub fn paren(&self) -> String {
        paren_notation(self.value, self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseyFitResult {
    pub t2_star: Estimate,
    pub p: Estimate,
    pub detuning: Estimate,
    /// `None` for single-line models.
    pub hyperfine_splitting: Option<Estimate>,
    pub line_frequencies: Vec<f64>,
    pub amplitude: Estimate,
    pub baseline: Estimate,
    pub phases: Vec<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    /// `(τ, exp(−(τ/T₂*)^p))` on the input delays.
    pub envelope: Vec<(f64, f64)>,
    pub model: RamseyModel,
}

/// Formats `value(σ)` with σ rounded to one significant digit.
pub fn paren_notation(value: f64, sigma: f64) -> String {
    if !(sigma.is_finite() && sigma > 0.0) {
        return format!("{value}");
    }
    let mut decimals = -sigma.log10().floor() as i32;
    let mut digit = (sigma * 10f64.powi(decimals)).round();
    if digit >= 10.0 {
        decimals -= 1;
        digit = (sigma * 10f64.powi(decimals)).round();
    }
    if decimals > 0 {
        format!("{value:.prec$}({digit})", prec = decimals as usize)
    } else {
        let unc = digit * 10f64.powi(-decimals);
        format!("{value:.0}({unc:.0})")
    }
}

struct RamseyResiduals<'a> {
    tau: &'a [f64],
    y: &'a [f64],
    offsets: Vec<f64>,
    /// Whether the splitting is a free parameter (otherwise single line).
    free_splitting: bool,
}

impl RamseyResiduals<'_> {
    fn n_lines(&self) -> usize {
        self.offsets.len()
    }

    fn phase_index(&self) -> usize {
        if self.free_splitting {
            6
        } else {
            5
        }
    }

    fn split(&self, x: &[f64]) -> f64 {
        if self.free_splitting {
            x[5]
        } else {
            0.0
        }
    }

    fn to_model(&self, x: &[f64], default_split: f64) -> RamseyModel {
        RamseyModel {
            baseline: x[0],
            amplitude: x[1],
            t2_star: x[2],
            p: x[3],
            detuning: x[4],
            hyperfine_splitting: if self.free_splitting {
                x[5]
            } else {
                default_split
            },
            n_hyperfine: self.n_lines(),
            phases: x[self.phase_index()..].to_vec(),
        }
    }
}

impl Residuals for RamseyResiduals<'_> {
    fn n_params(&self) -> usize {
        self.phase_index() + self.n_lines()
    }

    fn n_residuals(&self) -> usize {
        self.tau.len()
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        let (b, amp, t2, p, d) = (x[0], x[1], x[2], x[3], x[4]);
        let a = self.split(x);
        let phases = &x[self.phase_index()..];
        let inv_n = 1.0 / self.n_lines() as f64;
        for (i, (&t, &y)) in self.tau.iter().zip(self.y).enumerate() {
            let env = (-(t / t2).powf(p)).exp();
            let beat: f64 = self
                .offsets
                .iter()
                .zip(phases)
                .map(|(j, ph)| (TAU * (d + j * a) * t + ph).cos())
                .sum();
            out[i] = b + amp * env * beat * inv_n - y;
        }
    }

    fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
        let (amp, t2, p, d) = (x[1], x[2], x[3], x[4]);
        let a = self.split(x);
        let k0 = self.phase_index();
        let phases = &x[k0..];
        let inv_n = 1.0 / self.n_lines() as f64;
        for (i, &t) in self.tau.iter().enumerate() {
            let u = t / t2;
            let up = u.powf(p);
            let env = (-up).exp();
            let (mut c, mut sd, mut sa) = (0.0, 0.0, 0.0);
            for (k, (j, ph)) in self.offsets.iter().zip(phases).enumerate() {
                let (s, co) = (TAU * (d + j * a) * t + ph).sin_cos();
                c += co;
                sd += s;
                sa += s * j;
                jac[(i, k0 + k)] = -amp * env * s * inv_n;
            }
            let c = c * inv_n;
            jac[(i, 0)] = 1.0;
            jac[(i, 1)] = env * c;
            jac[(i, 2)] = amp * c * env * p * up / t2;
            jac[(i, 3)] = if t > 0.0 {
                -amp * c * env * up * u.ln()
            } else {
                0.0
            };
            jac[(i, 4)] = -amp * env * sd * inv_n * TAU * t;
            if self.free_splitting {
                jac[(i, 5)] = -amp * env * sa * inv_n * TAU * t;
            }
        }
    }

    fn project(&self, x: &mut [f64]) {
        x[2] = x[2].max(1e-9);
        x[3] = x[3].clamp(0.5, 3.0);
    }
}

/// Magnitude spectrum of the Hann-windowed, mean-removed signal on a
/// zero-padded grid; returns `(frequency step, |X|)` up to Nyquist.
fn spectrum(y: &[f64], dt: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let len = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
    for (i, v) in y.iter().enumerate() {
        let w = 0.5 - 0.5 * (TAU * i as f64 / (n as f64 - 1.0)).cos();
        buf[i] = Complex::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag = buf[..len / 2 + 1].iter().map(|z| z.norm()).collect();
    (1.0 / (len as f64 * dt), mag)
}

/// Local maxima of `mag`, strongest first, refined by a parabola through
/// the log magnitudes.
fn spectral_peaks(df: f64, mag: &[f64], count: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (1..mag.len() - 1)
        .filter(|&i| mag[i] > mag[i - 1] && mag[i] >= mag[i + 1])
        .collect();
    idx.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));
    idx.truncate(count);
    idx.iter()
        .map(|&i| {
            let (l, c, r) = (mag[i - 1].ln(), mag[i].ln(), mag[i + 1].ln());
            let den = l - 2.0 * c + r;
            let shift = if den < 0.0 { 0.5 * (l - r) / den } else { 0.0 };
            (i as f64 + shift.clamp(-0.5, 0.5)) * df
        })
        .collect()
}

/// Candidate `(δ, a)` pairs, δ ≥ 0 and a > 0, whose predicted |line|
/// frequencies best explain the observed peaks.
fn assign_lines(peaks: &[f64], offsets: &[f64]) -> Vec<(f64, f64)> {
    let n = offsets.len();
    if n == 1 {
        return vec![(peaks[0], 0.0)];
    }
    let span = offsets[n - 1] - offsets[0];
    let mut splits = Vec::new();
    for (i, &p) in peaks.iter().enumerate() {
        for &q in &peaks[i + 1..] {
            for dj in 1..n {
                splits.push((p - q).abs() / dj as f64);
                splits.push((p + q) / dj as f64);
            }
        }
    }
    let mut scored: Vec<(f64, f64, f64)> = Vec::new();
    for &a in splits.iter().filter(|&&a| a > 0.0) {
        for &p in peaks {
            for &j in offsets {
                for d in [p - j * a, -p - j * a] {
                    let d = d.abs();
                    let pred: Vec<f64> = offsets.iter().map(|j| (d + j * a).abs()).collect();
                    let miss = |xs: &[f64], ys: &[f64]| -> f64 {
                        xs.iter()
                            .map(|x| {
                                ys.iter()
                                    .map(|y| (x - y).abs())
                                    .fold(f64::INFINITY, f64::min)
                            })
                            .sum()
                    };
                    let score = miss(peaks, &pred) + miss(&pred, peaks);
                    scored.push((score, d, a));
                }
            }
        }
    }
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.total_cmp(&y.2)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let tol = 1e-6 * (1.0 + span);
    for (_, d, a) in scored {
        if out
            .iter()
            .all(|(d0, a0)| (d - d0).abs() > tol || (a - a0).abs() > tol)
        {
            out.push((d, a));
        }
        if out.len() == 6 {
            break;
        }
    }
    out
}

/// Least squares solve via SVD (tolerates collinear columns).
fn linear_lsq(design: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(y, 1e-12).ok()?;
    let ssr = (design * &coef - y).norm_squared();
    Some((coef, ssr))
}

/// Baseline, amplitude and phases at fixed frequencies and envelope.
fn linear_stage(
    tau: &[f64],
    y: &[f64],
    freqs: &[f64],
    t2: f64,
    p: f64,
) -> Option<(f64, f64, Vec<f64>, f64)> {
    let n = freqs.len();
    let design = DMatrix::from_fn(tau.len(), 1 + 2 * n, |i, c| {
        let t = tau[i];
        if c == 0 {
            return 1.0;
        }
        let env = (-(t / t2).powf(p)).exp();
        let arg = TAU * freqs[(c - 1) / 2] * t;
        if c % 2 == 1 {
            env * arg.cos()
        } else {
            env * arg.sin()
        }
    });
    let (coef, ssr) = linear_lsq(&design, &DVector::from_column_slice(y))?;
    let mut amp = 0.0;
    let mut phases = Vec::with_capacity(n);
    for k in 0..n {
        let (c, s) = (coef[1 + 2 * k], coef[2 + 2 * k]);
        amp += (c * c + s * s).sqrt();
        phases.push((-s).atan2(c));
    }
    Some((coef[0], amp, phases, ssr))
}

/// T₂* seed: line amplitudes from least squares in consecutive windows,
/// then a straight-line fit to their logarithm.
fn envelope_seed(tau: &[f64], y: &[f64], freqs: &[f64]) -> Option<f64> {
    let mut distinct: Vec<f64> = freqs.iter().map(|f| f.abs()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut min_sep = f64::INFINITY;
    let mut prev = 0.0;
    for &f in &distinct {
        if f > 1e-12 {
            min_sep = min_sep.min(f - prev);
            prev = f;
        }
    }
    let span = tau[tau.len() - 1] - tau[0];
    let width = (span / 12.0).max(2.0 / min_sep);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut start = 0;
    while start < tau.len() {
        let end = tau.partition_point(|&t| t < tau[start] + width);
        if end - start < 2 * distinct.len() + 3 {
            break;
        }
        let (ts, ys) = (&tau[start..end], &y[start..end]);
        if let Some((_, amp, _, _)) = linear_stage(ts, ys, &distinct, f64::INFINITY, 1.0) {
            let center = ts.iter().sum::<f64>() / ts.len() as f64;
            pts.push((center, amp));
        }
        start = end;
    }
    let a0 = pts.first()?.1;
    let usable: Vec<(f64, f64)> = pts
        .iter()
        .take_while(|p| p.1 > 0.1 * a0)
        .map(|&(t, a)| (t, a.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then_some(-1.0 / slope)
}

fn check_signal(signal: &RamseySignal) -> Result<f64> {
    let tau = &signal.tau_us;
    check_grid(tau)?;
    if signal.signal.len() != tau.len() {
        return Err(Error::invalid("delay and signal columns differ in length"));
    }
    if signal.signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite samples"));
    }
    if tau.len() < 32 {
        return Err(Error::invalid(format!(
            "under-sampled: {} samples, need >= 32",
            tau.len()
        )));
    }
    let dt = (tau[tau.len() - 1] - tau[0]) / (tau.len() - 1) as f64;
    if tau
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt)
    {
        return Err(Error::invalid("delay grid must be uniform"));
    }
    Ok(dt)
}

fn check_sampling(freqs: &[f64], dt: f64, span: f64) -> Result<()> {
    let f_max = freqs.iter().map(|f| f.abs()).fold(0.0, f64::max);
    if f_max * dt > 0.25 {
        return Err(Error::invalid(format!(
            "under-sampled: fastest line {f_max:.4} MHz has {:.2} samples per period, need >= 4",
            1.0 / (f_max * dt)
        )));
    }
    if f_max * span < 8.0 {
        return Err(Error::invalid(format!(
            "under-sampled: record spans {:.2} periods of the fastest line, need >= 8",
            f_max * span
        )));
    }
    Ok(())
}

/// Fits the Ramsey model. Frequencies are seeded from spectral peaks, T₂*
/// from the log envelope, amplitudes and phases by linear least squares;
/// Levenberg–Marquardt then refines all parameters.
pub fn fit(signal: &RamseySignal, cfg: &FitConfig) -> Result<RamseyFitResult> {
    let dt = check_signal(signal)?;
    let (tau, y) = (&signal.tau_us[..], &signal.signal[..]);
    let span = tau[tau.len() - 1] - tau[0];
    let n = cfg
        .initial
        .as_ref()
        .map(|m| m.n_hyperfine)
        .or(cfg.n_hyperfine)
        .unwrap_or(3);
    if n == 0 {
        return Err(Error::invalid("n_hyperfine must be >= 1"));
    }
    let offsets: Vec<f64> = line_offsets(n).collect();
    let free_splitting = n > 1;
    let problem = RamseyResiduals {
        tau,
        y,
        offsets: offsets.clone(),
        free_splitting,
    };
    let pack = |m: &RamseyModel| {
        let mut x = vec![m.baseline, m.amplitude, m.t2_star, m.p, m.detuning];
        if free_splitting {
            x.push(m.hyperfine_splitting);
        }
        x.extend((0..n).map(|k| m.phase(k)));
        x
    };

    let x0 = match &cfg.initial {
        Some(m) => {
            m.validate()?;
            check_sampling(&m.line_frequencies(), dt, span)?;
            pack(m)
        }
        None => {
            let (df, mag) = spectrum(y, dt);
            let peaks = spectral_peaks(df, &mag, n);
            if peaks.is_empty() {
                return Err(Error::computation("no spectral peak found in the signal"));
            }
            check_sampling(&peaks, dt, span)?;
            let mut best: Option<(f64, RamseyModel)> = None;
            for (d, a) in assign_lines(&peaks, &offsets) {
                let freqs: Vec<f64> = offsets.iter().map(|j| d + j * a).collect();
                let t2 = envelope_seed(tau, y, &freqs)
                    .filter(|t| t.is_finite() && *t > 0.0)
                    .unwrap_or(span / 3.0);
                let Some((b, amp, phases, ssr)) = linear_stage(tau, y, &freqs, t2, 1.0) else {
                    continue;
                };
                if best.as_ref().is_none_or(|(s, _)| ssr < *s) {
                    best = Some((
                        ssr,
                        RamseyModel {
                            t2_star: t2,
                            p: 1.0,
                            detuning: d,
                            hyperfine_splitting: if free_splitting { a } else { N14_HYPERFINE_MHZ },
                            n_hyperfine: n,
                            amplitude: amp,
                            baseline: b,
                            phases,
                        },
                    ));
                }
            }
            let (_, seed) =
                best.ok_or_else(|| Error::computation("frequency assignment failed"))?;
            pack(&seed)
        }
    };

    let lm = levenberg_marquardt(&problem, &x0, &cfg.lm)?;
    Ok(finish(&problem, &lm, tau))
}

fn wrap(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Canonical form (A > 0, δ ≥ 0, a > 0) and uncertainties.
fn finish(problem: &RamseyResiduals<'_>, lm: &LmFit, tau: &[f64]) -> RamseyFitResult {
    let mut m = problem.to_model(&lm.params, N14_HYPERFINE_MHZ);
    if m.amplitude < 0.0 {
        m.amplitude = -m.amplitude;
        m.phases.iter_mut().for_each(|p| *p += PI);
    }
    if m.detuning < 0.0 {
        // cos is even: negate every frequency and phase
        m.detuning = -m.detuning;
        m.hyperfine_splitting = -m.hyperfine_splitting;
        m.phases.iter_mut().for_each(|p| *p = -*p);
    }
    if problem.free_splitting && m.hyperfine_splitting < 0.0 {
        m.hyperfine_splitting = -m.hyperfine_splitting;
        m.phases.reverse();
    }
    m.phases.iter_mut().for_each(|p| *p = wrap(*p));
    let est = |value: f64, i: usize| Estimate {
        value,
        sigma: lm.sigma(i),
    };
    RamseyFitResult {
        t2_star: est(m.t2_star, 2),
        p: est(m.p, 3),
        detuning: est(m.detuning, 4),
        hyperfine_splitting: problem
            .free_splitting
            .then(|| est(m.hyperfine_splitting, 5)),
        line_frequencies: m.line_frequencies(),
        amplitude: est(m.amplitude, 1),
        baseline: est(m.baseline, 0),
        phases: m.phases.clone(),
        residual_rms: lm.residual_rms,
        iterations: lm.iterations,
        envelope: tau.iter().map(|&t| (t, m.envelope(t))).collect(),
        model: m,
    }
}

/// Fits independent signals in parallel.
pub fn fit_batch(signals: &[RamseySignal], cfg: &FitConfig) -> Vec<Result<RamseyFitResult>> {
    signals.par_iter().map(|s| fit(s, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<f64> {
        uniform_grid(800, 0.05)
    }

    #[test]
    fn zero_delay_is_baseline_plus_amplitude() {
        let m = RamseyModel {
            phases: vec![0.0; 3],
            ..RamseyModel::default()
        };
        let s = synthesize(&m, &[0.0], 0.0, 0).unwrap();
        assert!((s.signal[0] - (m.baseline + m.amplitude)).abs() < 1e-15);
    }

    #[test]
    fn envelope_is_one_over_e_at_t2() {
        let m = RamseyModel {
            detuning: 0.0,
            n_hyperfine: 1,
            baseline: 0.0,
            amplitude: 1.0,
            ..RamseyModel::default()
        };
        let v = m.evaluate(m.t2_star);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn triplet_matches_direct_sum() {
        let m = RamseyModel {
            phases: vec![0.3, -0.2, 1.1],
            ..RamseyModel::default()
        };
        for k in 0..500 {
            let t = k as f64 * 0.013;
            let env = (-t / m.t2_star).exp();
            let a = m.hyperfine_splitting;
            let direct = ((TAU * (0.4 - a) * t + 0.3).cos()
                + (TAU * 0.4 * t - 0.2).cos()
                + (TAU * (0.4 + a) * t + 1.1).cos())
                / 3.0;
            let expected = m.baseline + m.amplitude * env * direct;
            assert!((m.evaluate(t) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn beat_nodes_repeat_with_hyperfine_period() {
        // |Σ cos| with δ = 0 is periodic in 1/a
        let m = RamseyModel {
            detuning: 0.0,
            baseline: 0.0,
            amplitude: 1.0,
            t2_star: 1e9,
            ..RamseyModel::default()
        };
        let period = 1.0 / m.hyperfine_splitting;
        for k in 0..100 {
            let t = k as f64 * 0.0137;
            assert!((m.evaluate(t) - m.evaluate(t + period)).abs() < 1e-9);
        }
        // first node of 1 + 2cos(2πat) at t = 1/(3a)
        assert!(m.evaluate(period / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noise_free_fit_is_exact() {
        let truth = RamseyModel {
            phases: vec![0.2, -0.4, 0.7],
            ..RamseyModel::default()
        };
        let s = synthesize(&truth, &grid(), 0.0, 0).unwrap();
        let f = fit(&s, &FitConfig::default()).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(
            rel(f.t2_star.value, truth.t2_star) < 1e-6,
            "{:?}",
            f.t2_star
        );
        assert!(rel(f.p.value, truth.p) < 1e-6);
        assert!(rel(f.detuning.value, truth.detuning) < 1e-6);
        assert!(
            rel(
                f.hyperfine_splitting.unwrap().value,
                truth.hyperfine_splitting
            ) < 1e-6
        );
        assert!(rel(f.amplitude.value, truth.amplitude) < 1e-6);
        for (a, b) in f.phases.iter().zip(&truth.phases) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn recovers_dq_scale_decay() {
        let truth = RamseyModel {
            t2_star: 8.6,
            ..RamseyModel::default()
        };
        let s = synthesize(&truth, &uniform_grid(600, 0.05), 0.02 * truth.amplitude, 1).unwrap();
        let f = fit(&s, &FitConfig::default()).unwrap();
        assert!(
            (f.t2_star.value / 8.6 - 1.0).abs() < 0.05,
            "{:?}",
            f.t2_star
        );
    }

    #[test]
    fn single_line_fit() {
        let truth = RamseyModel {
            n_hyperfine: 1,
            detuning: 1.3,
            p: 1.6,
            ..RamseyModel::default()
        };
        let s = synthesize(&truth, &grid(), 0.0, 0).unwrap();
        let cfg = FitConfig {
            n_hyperfine: Some(1),
            ..FitConfig::default()
        };
        let f = fit(&s, &cfg).unwrap();
        assert!(f.hyperfine_splitting.is_none());
        assert!((f.t2_star.value / truth.t2_star - 1.0).abs() < 1e-6);
        assert!((f.p.value - 1.6).abs() < 1e-6);
    }

    #[test]
    fn envelope_samples_are_non_increasing() {
        let s = synthesize(&RamseyModel::default(), &grid(), 4e-4, 3).unwrap();
        let f = fit(&s, &FitConfig::default()).unwrap();
        assert!(f.envelope.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn rejects_undersampled_records() {
        let coarse = synthesize(&RamseyModel::default(), &uniform_grid(200, 0.15), 0.0, 0).unwrap();
        let err = fit(&coarse, &FitConfig::default()).unwrap_err();
        assert!(err.to_string().contains("under-sampled"), "{err}");
        let short = synthesize(&RamseyModel::default(), &uniform_grid(40, 0.05), 0.0, 0).unwrap();
        assert!(fit(&short, &FitConfig::default()).is_err());
    }

    #[test]
    fn uncertainties_are_calibrated() {
        let truth = RamseyModel::default();
        let signals: Vec<RamseySignal> = (0..50)
            .map(|seed| synthesize(&truth, &grid(), 0.02 * truth.amplitude, seed).unwrap())
            .collect();
        let fits = fit_batch(&signals, &FitConfig::default());
        let inside = fits
            .iter()
            .map(|f| f.as_ref().unwrap())
            .filter(|f| (f.t2_star.value - truth.t2_star).abs() <= 2.0 * f.t2_star.sigma)
            .count();
        assert!(inside >= 45, "{inside}/50 within 2 sigma");
    }

    #[test]
    fn parenthesis_notation() {
        assert_eq!(paren_notation(17.7132, 0.41), "17.7(4)");
        assert_eq!(paren_notation(8.6, 0.5), "8.6(5)");
        assert_eq!(paren_notation(8.63, 0.096), "8.6(1)");
        assert_eq!(paren_notation(1234.0, 56.0), "1234(60)");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn time_rescaling_is_covariant(k in 0.5f64..2.0) {
            let truth = RamseyModel { phases: vec![0.1, 0.5, -0.3], ..RamseyModel::default() };
            let scaled = RamseyModel {
                t2_star: truth.t2_star * k,
                detuning: truth.detuning / k,
                hyperfine_splitting: truth.hyperfine_splitting / k,
                ..truth.clone()
            };
            let a = fit(&synthesize(&truth, &grid(), 0.0, 0).unwrap(), &FitConfig::default()).unwrap();
            let tau_k: Vec<f64> = grid().iter().map(|t| t * k).collect();
            let b = fit(&synthesize(&scaled, &tau_k, 0.0, 0).unwrap(), &FitConfig::default()).unwrap();
            prop_assert!((b.t2_star.value / (k * a.t2_star.value) - 1.0).abs() < 1e-6);
            prop_assert!((b.detuning.value * k / a.detuning.value - 1.0).abs() < 1e-6);
        }
    }
}
