// NV- charge fraction from a PL spectrum: the measured spectrum is
// decomposed onto NV- and NV0 basis spectra and the weights corrected
// for the NV0/NV- brightness ratio.
//
// The basis shapes here are smooth stand-ins (zero-phonon line plus a
// broad phonon sideband); real use supplies measured bases.
//
// ```bash
// cargo run --release --example charge_fraction
// ```

use nvsk::charge::{decompose, ChargeDecomposition, Spectrum, DEFAULT_BRIGHTNESS_RATIO};

fn band(x: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((x - center) / width).powi(2)).exp()
}

fn basis(zpl: f64, sideband: f64) -> impl Fn(f64) -> f64 {
    move |x| 0.15 * band(x, zpl, 1.5) + band(x, sideband, 35.0)
}

pub fn run_example() -> nvsk::Result<ChargeDecomposition> {
    let wl: Vec<f64> = (0..=350).map(|k| 550.0 + k as f64).collect();
    let minus = basis(637.0, 690.0);
    let zero = basis(575.0, 630.0);
    let spectrum =
        |f: &dyn Fn(f64) -> f64| Spectrum::new(wl.clone(), wl.iter().map(|&x| f(x)).collect());

    // 60 % of the PL from NV-, 40 % from NV0
    let (w_minus, w_zero) = (0.6, 0.4);
    let measured = spectrum(&|x| w_minus * minus(x) + w_zero * zero(x))?;
    let d = decompose(
        &measured,
        &spectrum(&minus)?,
        &spectrum(&zero)?,
        DEFAULT_BRIGHTNESS_RATIO,
        Some(0.01),
    )?;

    println!("weights: NV- {:.6}, NV0 {:.6}", d.w_minus, d.w_zero);
    println!("psi = w- / (w- + {} w0) = {:.6}", d.brightness_ratio, d.psi);
    println!("relative residual {:.2e}", d.relative_residual);
    Ok(d)
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
