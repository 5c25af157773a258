// The optical readout chain: five-level populations under a pump pulse,
// PL rate, 4th-order Butterworth smoothing at 1.7 MHz, and the
// Sig/Ref contrast from which the initialization time is extracted.
//
// ```bash
// cargo run --release --example readout_chain
// ```

use nvsk::photophysics::butterworth::Butterworth;
use nvsk::photophysics::{self, FiveLevelParams, StateVector, FILTER_CUTOFF_MHZ, FILTER_ORDER};
use nvsk::units::Intensity;

#[derive(Debug)]
pub struct ReadoutSummary {
    pub gain_dc: f64,
    pub gain_at_cutoff: f64,
    pub peak_contrast_deviation: f64,
    pub t_i_us: f64,
    pub max_population_error: f64,
}

pub fn run_example() -> nvsk::Result<ReadoutSummary> {
    let dt = 0.01;
    let filter = Butterworth::lowpass(FILTER_ORDER, FILTER_CUTOFF_MHZ, 1.0 / dt)?;
    let gain_dc = filter.magnitude(0.0);
    let gain_at_cutoff = filter.magnitude(FILTER_CUTOFF_MHZ);
    println!("filter gain: DC {gain_dc:.9}, at {FILTER_CUTOFF_MHZ} MHz {gain_at_cutoff:.6} (1/sqrt2 = {:.6})", 0.5f64.sqrt());

    let params = FiveLevelParams::default();
    let i_sat = Intensity::mw_per_um2(params.i_sat_band.0)?;
    let intensity = Intensity::mw_per_um2(0.24)?;
    let s = intensity.saturation(i_sat);
    let t_end = photophysics::default_run_length(&params, s);
    let dt = params.max_dt(s).min(dt);

    let traj = photophysics::evolve(&params, s, StateVector::MS1, t_end, dt)?;
    let max_population_error = traj.max_conservation_error();

    let curve = photophysics::contrast_trace(&params, intensity, i_sat, t_end, dt)?;
    let peak_contrast_deviation = curve
        .contrast
        .iter()
        .map(|c| (1.0 - c).abs())
        .fold(0.0, f64::max);
    let t_i_us = photophysics::initialization_time(&curve.t_us, &curve.contrast)?;

    println!("I = 0.24 mW/um2, s = {s:.3}, run {t_end:.1} us");
    for k in (0..curve.len()).step_by(curve.len() / 10) {
        println!(
            "  t = {:>7.2} us  contrast {:.5}",
            curve.t_us[k], curve.contrast[k]
        );
    }
    println!("peak |1 - C| = {peak_contrast_deviation:.4}, t_I = {t_i_us:.3} us");
    println!("max |sum n - 1| = {max_population_error:.2e}");
    Ok(ReadoutSummary {
        gain_dc,
        gain_at_cutoff,
        peak_contrast_deviation,
        t_i_us,
        max_population_error,
    })
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
