// Nitrogen-concentration trade study with the simplified metric
// `(N·T2*)^(-1/2)` including the overhead duty cycle.
//
// Prints the sensitivity penalty of a 14 ppm sample relative to 0.8 ppm
// at 10 us overhead, and the optimal nitrogen concentration as the
// overhead time grows.
//
// ```bash
// cargo run --release --example nitrogen_tradeoff
// ```

use nvsk::sensitivity::{optimal_nitrogen, simplified_metric, MetricConfig};
use nvsk::units::Concentration;

pub struct Tradeoff {
    /// η̃(14 ppm) / η̃(0.8 ppm) at 10 us overhead.
    pub ratio_14_over_08: f64,
    /// (overhead us, optimal nitrogen ppm)
    pub optimum: Vec<(f64, f64)>,
}

pub fn run_example() -> nvsk::Result<Tradeoff> {
    // 50 ppm residual 13C, 10 us overhead
    let cfg = MetricConfig::default();
    let ratio = simplified_metric(Concentration::ppm(14.0)?, &cfg)?
        / simplified_metric(Concentration::ppm(0.8)?, &cfg)?;
    println!("eta(14 ppm) / eta(0.8 ppm) at t_O = 10 us: {ratio:.3}");

    println!("{:>12} {:>12}", "t_O (us)", "N_opt (ppm)");
    let mut optimum = Vec::new();
    for k in 0..=12 {
        let t_o = 0.1 * 10f64.powf(k as f64 / 4.0);
        let opt = optimal_nitrogen(t_o, &cfg)?;
        println!("{t_o:>12.3} {:>12.4}", opt.ns0_ppm);
        optimum.push((t_o, opt.ns0_ppm));
    }
    let floor = cfg.bath.a_c13 * cfg.c13.value() / cfg.bath.a_ns0;
    println!("long-overhead limit A_13C [13C] / A_N: {floor:.4} ppm");
    Ok(Tradeoff {
        ratio_14_over_08: ratio,
        optimum,
    })
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
