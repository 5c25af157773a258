//! Runs every example and checks the numbers it reports.

mod dephasing_budget {
    include!("../examples/dephasing_budget.rs");
}
mod nitrogen_tradeoff {
    include!("../examples/nitrogen_tradeoff.rs");
}
mod sample_comparison {
    include!("../examples/sample_comparison.rs");
}
mod ramsey_fit {
    include!("../examples/ramsey_fit.rs");
}
mod charge_fraction {
    include!("../examples/charge_fraction.rs");
}
mod readout_chain {
    include!("../examples/readout_chain.rs");
}
mod initialization_band {
    include!("../examples/initialization_band.rs");
}
mod strain_scaling {
    include!("../examples/strain_scaling.rs");
}
mod cli_pipeline {
    include!("../examples/cli_pipeline.rs");
}

fn t2(t: nvsk::dephasing::T2Star) -> f64 {
    t.finite().expect("finite T2*")
}

#[test]
fn dephasing_budget_example() {
    let s = dephasing_budget::run_example().unwrap();
    assert!((s.ns0_post_ppm - 0.332).abs() < 1e-3);
    let bath = t2(s.bath.t2_star_total);
    assert!((19.0..21.0).contains(&bath), "{bath}");
    assert!(t2(s.with_strain.t2_star_total) < bath);
    assert!((t2(s.dq) - bath / 2.0).abs() < 1e-9);
}

#[test]
fn nitrogen_tradeoff_example() {
    let t = nitrogen_tradeoff::run_example().unwrap();
    assert!((2.5..3.2).contains(&t.ratio_14_over_08));
    assert!(t.optimum.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
    let (_, last) = *t.optimum.last().unwrap();
    assert!(last > 0.0495 && last < 0.1, "{last}");
}

#[test]
fn sample_comparison_example() {
    let c = sample_comparison::run_example().unwrap();
    let x = c.crossover.expect("ratio crosses 1");
    assert!(c.intensity[0] < x && x < *c.intensity.last().unwrap());
    assert!(c.ratio_dq.iter().all(|r| r.is_finite() && *r > 0.0));
    for (i, r) in c.intensity.iter().zip(&c.ratio_sq) {
        assert_eq!(*r > 1.0, *i < x, "I = {i}, ratio {r}");
    }
}

#[test]
fn ramsey_fit_example() {
    for (truth, fit) in ramsey_fit::run_example().unwrap() {
        assert!((fit.t2_star.value / truth - 1.0).abs() < 0.05);
        assert!((fit.t2_star.value - truth).abs() < 4.0 * fit.t2_star.sigma + 0.05 * truth);
    }
}

#[test]
fn charge_fraction_example() {
    let d = charge_fraction::run_example().unwrap();
    assert!((d.w_minus - 0.6).abs() < 1e-9 && (d.w_zero - 0.4).abs() < 1e-9);
    assert!((d.psi - 0.6 / (0.6 + 2.5 * 0.4)).abs() < 1e-9);
    assert!(d.relative_residual < 1e-12);
}

#[test]
fn readout_chain_example() {
    let r = readout_chain::run_example().unwrap();
    assert!((r.gain_dc - 1.0).abs() < 1e-6);
    assert!((r.gain_at_cutoff * 2f64.sqrt() - 1.0).abs() < 0.02);
    assert!(r.peak_contrast_deviation > 0.1 && r.peak_contrast_deviation < 1.0);
    assert!(r.t_i_us > 0.0 && r.t_i_us.is_finite());
    assert!(r.max_population_error < 1e-9);
}

#[test]
fn initialization_band_example() {
    let rows = initialization_band::run_example().unwrap();
    assert_eq!(rows.len(), 40);
    for w in rows.windows(2) {
        assert!(w[1].1 <= w[0].1 * (1.0 + 1e-6));
        assert!(w[1].2 <= w[0].2 * (1.0 + 1e-6));
    }
    assert!(rows.iter().all(|&(_, lo, hi)| lo <= hi));
}

#[test]
fn strain_scaling_example() {
    let r = strain_scaling::run_example().unwrap();
    assert!((r.fit.exponent + 1.0).abs() < 0.05, "{}", r.fit.exponent);
    assert_eq!(r.points.len(), 12);
}

#[test]
fn cli_pipeline_example() {
    let dir = cli_pipeline::run_example().unwrap();
    for name in [
        "budget.json",
        "ramsey_fit.json",
        "strain.json",
        "map.csv",
        "ramsey.csv",
    ] {
        assert!(dir.join(name).is_file(), "{name}");
        assert!(
            dir.join(format!("{name}.manifest.json")).is_file(),
            "{name}"
        );
    }
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ramsey_fit.json")).unwrap())
            .unwrap();
    let t2 = fit["fit"]["t2_star"]["value"].as_f64().unwrap();
    assert!((t2 / 17.7 - 1.0).abs() < 0.05);
    std::fs::remove_dir_all(dir).unwrap();
}
