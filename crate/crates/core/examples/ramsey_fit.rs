// Synthesizes noisy single-quantum and double-quantum Ramsey signals
// with the 14N hyperfine triplet and recovers T2* by least squares.
//
// ```bash
// cargo run --release --example ramsey_fit
// ```

use nvsk::ramsey::{self, FitConfig, RamseyFitResult, RamseyModel};

pub fn run_example() -> nvsk::Result<Vec<(f64, RamseyFitResult)>> {
    let mut out = Vec::new();
    for (label, t2, seed) in [("SQ", 17.7, 11), ("DQ", 8.6, 12)] {
        let truth = RamseyModel {
            t2_star: t2,
            phases: vec![0.3, -0.1, 0.5],
            ..RamseyModel::default()
        };
        // 50 ns steps over ~4 T2*; noise 2 % of the fringe amplitude
        let tau = ramsey::uniform_grid((4.0 * t2 / 0.05) as usize, 0.05);
        let signal = ramsey::synthesize(&truth, &tau, 0.02 * truth.amplitude, seed)?;
        let fit = ramsey::fit(&signal, &FitConfig::default())?;
        println!(
            "{label}: true T2* {t2} us, fitted {} us, p = {}, detuning {} MHz, splitting {} MHz",
            fit.t2_star.paren(),
            fit.p.paren(),
            fit.detuning.paren(),
            fit.hyperfine_splitting
                .as_ref()
                .map_or("-".into(), |e| e.paren()),
        );
        out.push((t2, fit));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
