// T2* budget of a low-nitrogen, isotopically purified sample after
// irradiation and annealing, with and without a strain contribution, and
// the double-quantum dephasing time that drops strain.
//
// ```bash
// cargo run --release --example dephasing_budget
// ```

use nvsk::dephasing::{
    dq_t2star, nitrogen_bookkeeping, spin_bath_budget, strain_rate_from_fwhm, strain_t2_from_fwhm,
    BathCoefficients, DephasingBudget, T2Star,
};
use nvsk::units::DiamondSample;

pub struct BudgetSummary {
    pub ns0_post_ppm: f64,
    pub bath: DephasingBudget,
    pub with_strain: DephasingBudget,
    pub dq: T2Star,
}

pub fn run_example() -> nvsk::Result<BudgetSummary> {
    // 0.8 ppm as grown, 108 ppm 13C, 0.39 ppm NV at 20 % NV-
    let sample = DiamondSample::new(0.8, 108.0, 0.39, 0.2)?;
    let coeffs = BathCoefficients::default();

    let ns0_post = nitrogen_bookkeeping(
        sample.ns0_as_grown,
        sample.nv_total,
        sample.charge_fraction_psi,
    )?;
    let bath = spin_bath_budget(&sample, &coeffs)?;
    println!("N_s0 after treatment: {:.3} ppm", ns0_post.value());
    for (name, t2) in bath.term_t2() {
        println!("  {name:>6}: {t2}");
    }
    println!("spin-bath T2*: {}", bath.t2_star_total);

    for fwhm in [15.0, 31.0] {
        println!(
            "strain FWHM {fwhm} kHz alone: {}",
            strain_t2_from_fwhm(fwhm)?
        );
    }
    let with_strain = bath.with_strain(strain_rate_from_fwhm(15.0)?)?;
    println!("SQ T2* with 15 kHz strain: {}", with_strain.t2_star_total);

    let dq = dq_t2star(&with_strain);
    println!("DQ T2* (strain cancelled): {dq}");

    Ok(BudgetSummary {
        ns0_post_ppm: ns0_post.value(),
        bath,
        with_strain,
        dq,
    })
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
