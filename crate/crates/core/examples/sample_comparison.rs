// Volume-normalized Ramsey sensitivity of a low-nitrogen and a
// high-nitrogen sample versus laser intensity.
//
// The measured operating points (contrast, NV- fraction, overhead time,
// T2*) are not published, so both intensity tables are synthetic with the
// reported trends: the low-nitrogen sample keeps a long T2* but loses NV-
// and contrast under strong illumination; the high-nitrogen sample has a
// short T2* and a more stable charge state. Overhead times follow
// `12/I + 40` us, the shape of the simulated initialization time.
//
// ```bash
// cargo run --release --example sample_comparison
// ```

use nvsk::sensitivity::{sensitivity_ratio, IntensityRow, IntensityTable, Protocol, SensorSetup};
use nvsk::units::{DiamondSample, Intensity};

pub struct Comparison {
    pub intensity: Vec<f64>,
    /// η_high / η_low; above 1 the low-nitrogen sample is better.
    pub ratio_sq: Vec<f64>,
    pub ratio_dq: Vec<f64>,
    /// Intensity where the SQ ratio crosses 1, log-interpolated.
    pub crossover: Option<f64>,
}

fn overhead_us(i: f64) -> f64 {
    12.0 / i + 40.0
}

fn table(
    intensities: &[f64],
    contrast: impl Fn(f64) -> f64,
    psi: impl Fn(f64) -> f64,
    t2_sq: f64,
    t2_dq: f64,
) -> nvsk::Result<IntensityTable> {
    let rows = intensities
        .iter()
        .map(|&i| IntensityRow {
            t2_sq_us: Some(t2_sq),
            t2_dq_us: Some(t2_dq),
            ..IntensityRow::new(i, contrast(i), psi(i), overhead_us(i))
        })
        .collect();
    IntensityTable::new(rows)
}

/// Synthetic (low-N, high-N) samples and tables on 1e-3..1e1 mW/um^2.
pub fn synthetic_tables() -> nvsk::Result<[(DiamondSample, IntensityTable); 2]> {
    let grid: Vec<f64> = (0..=16)
        .map(|k| 1e-3 * 10f64.powf(k as f64 / 4.0))
        .collect();
    let low = table(
        &grid,
        |i| 0.04 / (1.0 + i / 0.02).sqrt(),
        |i| 0.1 + 0.3 / (1.0 + i / 0.01),
        17.7,
        8.6,
    )?;
    let high = table(
        &grid,
        |i| 0.035 / (1.0 + i / 1.0).sqrt(),
        |i| 0.5 + 0.25 / (1.0 + i / 0.3),
        1.5,
        0.75,
    )?;
    Ok([
        (DiamondSample::new(0.8, 108.0, 0.39, 0.2)?, low),
        (DiamondSample::new(14.0, 108.0, 3.0, 0.6)?, high),
    ])
}

fn crossing(x: &[f64], y: &[f64]) -> Option<f64> {
    x.windows(2).zip(y.windows(2)).find_map(|(xs, ys)| {
        let (a, b) = (ys[0].ln(), ys[1].ln());
        (a > 0.0 && b <= 0.0).then(|| {
            let f = a / (a - b);
            (xs[0].ln() + f * (xs[1].ln() - xs[0].ln())).exp()
        })
    })
}

pub fn run_example() -> nvsk::Result<Comparison> {
    let [(low_s, low_t), (high_s, high_t)] = synthetic_tables()?;
    let setup = SensorSetup::default();
    let intensity: Vec<f64> = (0..=40)
        .map(|k| 1e-3 * 10f64.powf(k as f64 / 10.0))
        .collect();
    let mut ratio_sq = Vec::new();
    let mut ratio_dq = Vec::new();
    println!(
        "{:>12} {:>14} {:>14}",
        "I (mW/um2)", "SQ high/low", "DQ high/low"
    );
    for &i in &intensity {
        let at = Intensity::mw_per_um2(i)?;
        let sq = sensitivity_ratio(
            (&high_s, &high_t),
            (&low_s, &low_t),
            at,
            Protocol::Sq,
            &setup,
        )?;
        let dq = sensitivity_ratio(
            (&high_s, &high_t),
            (&low_s, &low_t),
            at,
            Protocol::Dq,
            &setup,
        )?;
        println!("{i:>12.4e} {sq:>14.4} {dq:>14.4}");
        ratio_sq.push(sq);
        ratio_dq.push(dq);
    }
    let crossover = crossing(&intensity, &ratio_sq);
    match crossover {
        Some(c) => println!("low-nitrogen sample is better below {c:.3e} mW/um2"),
        None => println!("no crossover on this grid"),
    }
    Ok(Comparison {
        intensity,
        ratio_sq,
        ratio_dq,
        crossover,
    })
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
