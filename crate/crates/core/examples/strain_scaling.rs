// Sensor-size scaling of a strain-limited sensitivity metric on a
// synthetic wide-field strain map.
//
// A 1000 x 1000 pixel map (3 um pitch) is split into square sub-regions
// from 30 um to 3 mm; each sub-region's strain linewidth is fitted and the
// median width per size combined with the spin-bath dephasing rate.
//
// ```bash
// cargo run --release --example strain_scaling
// ```

use nvsk::dephasing::{spin_bath_budget, BathCoefficients};
use nvsk::strainmap::{self, PartitionConfig, ScalingResult, SynthModel};
use nvsk::units::DiamondSample;

pub fn run_example() -> nvsk::Result<ScalingResult> {
    let map = strainmap::synthesize(
        &SynthModel::Stationary { gamma_khz: 7.5 },
        1000,
        1000,
        3.0,
        7,
    )?;
    let sizes: Vec<f64> = (0..12)
        .map(|k| 30.0 * 100f64.powf(k as f64 / 11.0))
        .collect();
    let stats = strainmap::partition_sweep(&map, &sizes, &PartitionConfig::default())?;

    let sample = DiamondSample::new(0.8, 108.0, 0.39, 0.2)?;
    let bath = spin_bath_budget(&sample, &BathCoefficients::default())?;
    let result = strainmap::scaling_metric(&stats, bath.bath_rate())?;

    println!(
        "{:>10} {:>8} {:>12} {:>10} {:>14}",
        "L (um)", "tiles", "median (kHz)", "T2eff (us)", "metric"
    );
    for (s, p) in stats.iter().zip(&result.points) {
        println!(
            "{:>10.1} {:>8} {:>12.3} {:>10.3} {:>14.4e}",
            p.sensor_size_um, s.n_tiles, p.median_fwhm_khz, p.t2_eff_us, p.metric
        );
    }
    println!(
        "exponent {:.4} +/- {:.4}",
        result.fit.exponent, result.fit.exponent_sigma
    );
    Ok(result)
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
