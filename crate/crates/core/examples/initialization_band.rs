// Spin initialization time versus laser intensity, bracketed by the
// lower and upper saturation intensities.
//
// ```bash
// cargo run --release --example initialization_band
// ```

use nvsk::photophysics::{self, FiveLevelParams};
use nvsk::units::Intensity;

pub fn run_example() -> nvsk::Result<Vec<(f64, f64, f64)>> {
    let params = FiveLevelParams::default();
    let grid = (0..40)
        .map(|k| Intensity::mw_per_um2(1e-3 * 10f64.powf(4.0 * k as f64 / 39.0)))
        .collect::<nvsk::Result<Vec<_>>>()?;
    let band = photophysics::ti_band(&params, &grid)?;
    println!(
        "{:>12} {:>14} {:>14}",
        "I (mW/um2)", "t_I lower (us)", "t_I upper (us)"
    );
    let mut rows = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        println!(
            "{:>12.4e} {:>14.3} {:>14.3}",
            band.intensity[k], band.lower[k], band.upper[k]
        );
        rows.push((band.intensity[k], band.lower[k], band.upper[k]));
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
