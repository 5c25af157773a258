//! The `nvsk` command line: `nvsk <module> <verb> [options]`.
//!
//! Exit codes: 0 on success, 1 for invalid input (arguments, configuration,
//! files), 2 when a computation fails. `NVSK_THREADS` caps the worker pool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::charge::{decompose, DEFAULT_BRIGHTNESS_RATIO};
use crate::dephasing::{
    dq_t2star, nitrogen_bookkeeping, spin_bath_budget, strain_rate_from_fwhm, T2Star,
};
use crate::error::{Error, Result};
use crate::io::{
    emit_csv, emit_json, parse_config, read_intensity_table, read_ramsey_signal, read_spectrum,
    read_strain_map, round_json, sidecar_path, strain_map_csv, Config, CsvTable, RunManifest,
    StrainSidecar,
};
use crate::photophysics::{
    default_run_length, initialization_time, protocol_curve, ti_band, StateVector,
    FILTER_CUTOFF_MHZ,
};
use crate::ramsey::{self, FitConfig};
use crate::sensitivity::{
    optimal_nitrogen, volume_normalized_sensitivity, IntensityTable, Protocol,
};
use crate::strainmap::{
    histogram_fwhm, mean_subtract, partition_sweep, scaling_metric, BinRule, PartitionConfig,
    SynthModel,
};
use crate::units::Intensity;

/// `lo:hi:log[:n]` or `lo:hi:lin[:n]`; `n` defaults to 50.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n)
            .map(|i| {
                let f = i as f64 / (self.n - 1) as f64;
                if self.log {
                    self.lo * (self.hi / self.lo).powf(f)
                } else {
                    self.lo + (self.hi - self.lo) * f
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("grid '{s}' is not lo:hi:log[:n] or lo:hi:lin[:n]"));
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let log = match parts[2] {
            "log" => true,
            "lin" => false,
            _ => return Err(bad()),
        };
        let n = match parts.get(3) {
            Some(n) => n.parse().map_err(|_| bad())?,
            None => 50,
        };
        if !(lo.is_finite() && hi.is_finite() && hi >= lo && n >= 1) || (log && lo <= 0.0) {
            return Err(Error::invalid(format!(
                "grid '{s}' needs lo <= hi, n >= 1 and lo > 0 on a log axis"
            )));
        }
        Ok(Grid { lo, hi, log, n })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nvsk",
    version,
    about = "NV-ensemble DC magnetometry modeling and analysis"
)]
pub struct Cli {
    /// Configuration file (key = value with [sections]).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for commands that draw random numbers (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// T2* budget of the configured sample.
    Dephasing(DephasingArgs),
    /// Shot-noise sensitivity curves and trade studies.
    #[command(subcommand)]
    Sensitivity(SensitivityCommand),
    /// Rate-equation simulation of spin initialization.
    #[command(subcommand)]
    Photophysics(PhotophysicsCommand),
    /// Ramsey signal synthesis and fitting.
    #[command(subcommand)]
    Ramsey(RamseyCommand),
    /// Strain-map linewidth statistics.
    #[command(subcommand)]
    Strain(StrainCommand),
    /// NV charge-state fraction from PL spectra.
    #[command(subcommand)]
    Charge(ChargeCommand),
}

#[derive(Debug, Args)]
pub struct DephasingArgs {
    /// Strain linewidth (FWHM), kHz.
    #[arg(long)]
    pub strain_fwhm_khz: Option<f64>,
    /// Additional bias-field inhomogeneity rate, 1/us.
    #[arg(long)]
    pub bias_rate_per_us: Option<f64>,
    /// JSON output; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SensitivityCommand {
    /// Volume-normalized sensitivity versus intensity for one sample.
    Sweep(SweepArgs),
    /// Nitrogen concentration minimizing the simplified metric versus overhead time.
    OptimalN(OptimalNArgs),
    /// Sensitivity ratio of two samples (or protocols) versus intensity.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sample configuration; defaults to --config.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// Intensity table CSV.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value = "sq")]
    pub protocol: Protocol,
    /// Intensities to evaluate; the table rows when omitted.
    #[arg(long)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimalNArgs {
    /// Overhead times, us.
    #[arg(long, default_value = "0.1:100:log:61")]
    pub to_grid: Grid,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Configuration of sample a; defaults to --config.
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub table_a: PathBuf,
    /// Configuration of sample b; defaults to that of a.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Intensity table of b; defaults to that of a.
    #[arg(long)]
    pub table_b: Option<PathBuf>,
    #[arg(long, default_value = "sq")]
    pub protocol: Protocol,
    /// Protocol for b; defaults to --protocol.
    #[arg(long)]
    pub protocol_b: Option<Protocol>,
    /// Intensities; 40 log-spaced points over the tables' overlap when omitted.
    #[arg(long)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum PhotophysicsCommand {
    /// Filtered PL and contrast versus delay at one intensity.
    Simulate(SimulateArgs),
    /// Initialization time over an intensity grid at both saturation bounds.
    TiBand(TiBandArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Laser intensity, mW/um^2.
    #[arg(long)]
    pub intensity: f64,
    /// Saturation intensity, mW/um^2; the lower configured bound when omitted.
    #[arg(long)]
    pub isat: Option<f64>,
    /// Duration, us.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Integration step, us.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Rows kept in the output (the trace is decimated to fit).
    #[arg(long, default_value_t = 100_000)]
    pub max_rows: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TiBandArgs {
    /// Intensities, mW/um^2.
    #[arg(long, default_value = "1e-3:1e1:log:40")]
    pub grid: Grid,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum RamseyCommand {
    /// Synthetic Ramsey signal; unset options come from [ramsey].
    Synth(SynthArgs),
    /// Fit a Ramsey signal CSV (tau_us, contrast).
    Fit(FitArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// T2*, us.
    #[arg(long)]
    pub t2: Option<f64>,
    /// Stretch exponent.
    #[arg(long)]
    pub p: Option<f64>,
    /// Detuning, MHz.
    #[arg(long)]
    pub detuning: Option<f64>,
    /// Hyperfine splitting, MHz.
    #[arg(long)]
    pub hyperfine: Option<f64>,
    #[arg(long)]
    pub n_hyperfine: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Gaussian noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of delays.
    #[arg(long)]
    pub n: Option<usize>,
    /// Delay step, us.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub signal: PathBuf,
    /// Number of hyperfine lines in the model (default 3).
    #[arg(long)]
    pub n_hyperfine: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StrainCommand {
    /// Linewidth versus sensor size and the scaling of the sensitivity metric.
    Analyze(AnalyzeArgs),
    /// Synthetic strain map with its JSON sidecar.
    Synth(StrainSynthArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Headerless CSV grid, kHz.
    pub map: PathBuf,
    /// Metadata JSON; `<map>.json` when omitted.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Sensor sizes (tile edge), um.
    #[arg(long, default_value = "30:3000:log:12")]
    pub sizes: Grid,
    /// Fixed histogram bin width, kHz (Freedman-Diaconis by default).
    #[arg(long)]
    pub bin_width_khz: Option<f64>,
    /// Tiling origin as ROW,COL pixels.
    #[arg(long, default_value = "0,0")]
    pub tile_offset: String,
    /// Non-strain dephasing rate, 1/us; the configured sample's bath plus bias rate when omitted.
    #[arg(long)]
    pub other_rate_per_us: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StrainSynthArgs {
    /// stationary, two-region or gradient.
    #[arg(long, default_value = "stationary")]
    pub model: String,
    #[arg(long, default_value_t = 1000)]
    pub rows: usize,
    #[arg(long, default_value_t = 1000)]
    pub cols: usize,
    /// Pixel pitch, um.
    #[arg(long, default_value_t = 3.0)]
    pub pitch_um: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ChargeCommand {
    /// Decompose a PL spectrum onto NV- and NV0 bases.
    Decompose(DecomposeArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub measured: PathBuf,
    #[arg(long)]
    pub basis_minus: PathBuf,
    #[arg(long)]
    pub basis_zero: PathBuf,
    /// NV- to NV0 per-center brightness ratio.
    #[arg(long, default_value_t = DEFAULT_BRIGHTNESS_RATIO)]
    pub ratio: f64,
    /// Excitation intensity of the measurement, mW/um^2.
    #[arg(long)]
    pub intensity: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// 1 for input problems, 2 for failed computations.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Computation(_) | Error::NoConvergence { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match configure_threads().and_then(|()| run(cli, command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NVSK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::invalid(format!(
            "NVSK_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    // a pool that already exists (repeated in-process runs) is kept
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

struct Context {
    config: Option<PathBuf>,
    set: Vec<String>,
    seed: Option<u64>,
    command: Vec<String>,
}

impl Context {
    /// `path`, else `--config`, else defaults; then every `--set`.
    fn config(&self, path: Option<&Path>) -> Result<(Config, Option<PathBuf>)> {
        let path = path.map(Path::to_path_buf).or_else(|| self.config.clone());
        let mut cfg = match &path {
            Some(p) => parse_config(p)?,
            None => Config::default(),
        };
        for s in &self.set {
            cfg.apply_override(s)?;
        }
        Ok((cfg, path))
    }

    fn manifest(&self, config: &impl serde::Serialize, inputs: &[&Path]) -> Result<RunManifest> {
        let mut m = RunManifest::new(self.command.clone(), config)?;
        for p in inputs {
            m.add_input(p)?;
        }
        Ok(m)
    }
}

fn check_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out_abs) = out.canonicalize() else {
        return Ok(());
    };
    for p in inputs {
        if p.canonicalize().is_ok_and(|p| p == out_abs) {
            return Err(Error::invalid(format!(
                "output {} would overwrite an input",
                out.display()
            )));
        }
    }
    Ok(())
}

pub fn run(cli: Cli, command: Vec<String>) -> Result<()> {
    let ctx = Context {
        config: cli.config,
        set: cli.set,
        seed: cli.seed,
        command,
    };
    match cli.command {
        Command::Dephasing(a) => dephasing(&ctx, a),
        Command::Sensitivity(SensitivityCommand::Sweep(a)) => sweep(&ctx, a),
        Command::Sensitivity(SensitivityCommand::OptimalN(a)) => optimal_n(&ctx, a),
        Command::Sensitivity(SensitivityCommand::Compare(a)) => compare(&ctx, a),
        Command::Photophysics(PhotophysicsCommand::Simulate(a)) => simulate(&ctx, a),
        Command::Photophysics(PhotophysicsCommand::TiBand(a)) => ti_band_cmd(&ctx, a),
        Command::Ramsey(RamseyCommand::Synth(a)) => ramsey_synth(&ctx, a),
        Command::Ramsey(RamseyCommand::Fit(a)) => ramsey_fit(&ctx, a),
        Command::Strain(StrainCommand::Analyze(a)) => strain_analyze(&ctx, a),
        Command::Strain(StrainCommand::Synth(a)) => strain_synth(&ctx, a),
        Command::Charge(ChargeCommand::Decompose(a)) => charge_decompose(&ctx, a),
    }
}

fn inputs_with<'a>(config: &'a Option<PathBuf>, files: &[&'a Path]) -> Vec<&'a Path> {
    config
        .iter()
        .map(PathBuf::as_path)
        .chain(files.iter().copied())
        .collect()
}

fn dephasing(ctx: &Context, args: DephasingArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let sample = cfg.sample()?;
    let strain = args
        .strain_fwhm_khz
        .unwrap_or(cfg.dephasing.strain_fwhm_khz);
    let bias = args
        .bias_rate_per_us
        .unwrap_or(cfg.dephasing.bias_rate_per_us);
    let ns0_post = nitrogen_bookkeeping(
        sample.ns0_as_grown,
        sample.nv_total,
        sample.charge_fraction_psi,
    )?;
    let budget = spin_bath_budget(&sample, &cfg.bath)?
        .with_strain(strain_rate_from_fwhm(strain)?)?
        .with_bias(bias)?;
    let terms = budget.term_t2();
    let report = json!({
        "sample": {
            "ns0_as_grown_ppm": sample.ns0_as_grown.value(),
            "ns0_post_ppm": ns0_post.value(),
            "c13_ppm": sample.c13.value(),
            "nv_ppm": sample.nv_total.value(),
            "nv_minus_ppm": sample.nv_minus(),
            "psi": sample.charge_fraction_psi,
            "n_orientations_sensing": sample.n_orientations_sensing,
        },
        "strain_fwhm_khz": strain,
        "rates_per_us": {
            "ns0": budget.rate_ns0,
            "c13": budget.rate_c13,
            "nv_nv": budget.rate_nv_nv,
            "strain": budget.rate_strain,
            "bias": budget.rate_bias,
        },
        "t2_star_us": terms.iter().map(|(k, t)| (k.to_string(), json!(t))).collect::<serde_json::Map<_, _>>(),
        "t2_star_bath_us": T2Star::from_rate(budget.bath_rate()),
        "t2_star_sq_us": budget.t2_star_total,
        "t2_star_dq_us": dq_t2star(&budget),
    });
    match args.out {
        Some(out) => {
            let inputs = inputs_with(&cfg_path, &[]);
            check_output(&out, &inputs)?;
            emit_json(&out, &report, &mut ctx.manifest(&cfg, &inputs)?)
        }
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&round_json(report)).expect("JSON value")
            );
            Ok(())
        }
    }
}

fn intensity(i: f64) -> Result<Intensity> {
    Intensity::mw_per_um2(i)
}

fn sweep(ctx: &Context, args: SweepArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(args.sample.as_deref())?;
    let sample = cfg.sample()?;
    let setup = cfg.sensor_setup();
    let table = read_intensity_table(&args.table)?;
    let grid = match args.grid {
        Some(g) => g.points(),
        None => table.rows().iter().map(|r| r.intensity).collect(),
    };
    let mut out = CsvTable::new([
        "intensity_mw_um2",
        "tau_opt_us",
        "eta_t_cm1p5_per_rthz",
        "t2_star_us",
        "n_avg",
    ]);
    for i in grid {
        let v =
            volume_normalized_sensitivity(&sample, &table, intensity(i)?, args.protocol, &setup)?;
        out.push(vec![v.intensity, v.tau_us, v.eta, v.t2_star_us, v.n_avg]);
    }
    let inputs = inputs_with(&cfg_path, &[&args.table]);
    check_output(&args.out, &inputs)?;
    emit_csv(&args.out, &out, &mut ctx.manifest(&cfg, &inputs)?)
}

fn optimal_n(ctx: &Context, args: OptimalNArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let metric = cfg.metric_config()?;
    let mut out = CsvTable::new(["t_overhead_us", "n_opt_ppm", "eta_rel"]);
    for t in args.to_grid.points() {
        let opt = optimal_nitrogen(t, &metric)?;
        out.push(vec![t, opt.ns0_ppm, opt.metric]);
    }
    let inputs = inputs_with(&cfg_path, &[]);
    check_output(&args.out, &inputs)?;
    emit_csv(&args.out, &out, &mut ctx.manifest(&cfg, &inputs)?)
}

fn overlap_grid(a: &IntensityTable, b: &IntensityTable) -> Result<Vec<f64>> {
    let (lo, hi) = (a.range().0.max(b.range().0), a.range().1.min(b.range().1));
    if lo > hi {
        return Err(Error::invalid(format!(
            "intensity tables do not overlap: [{}, {}] and [{}, {}]",
            a.range().0,
            a.range().1,
            b.range().0,
            b.range().1
        )));
    }
    let n = if lo < hi { 40 } else { 1 };
    let mut g = Grid {
        lo,
        hi,
        log: true,
        n,
    }
    .points();
    // pin the ends against rounding in the log spacing
    g[0] = lo;
    *g.last_mut().expect("non-empty grid") = hi;
    Ok(g)
}

fn compare(ctx: &Context, args: CompareArgs) -> Result<()> {
    let (cfg_a, path_a) = ctx.config(args.a.as_deref())?;
    let (cfg_b, path_b) = match &args.b {
        Some(p) => ctx.config(Some(p))?,
        None => (cfg_a.clone(), path_a.clone()),
    };
    let table_b_path = args.table_b.clone().unwrap_or_else(|| args.table_a.clone());
    let table_a = read_intensity_table(&args.table_a)?;
    let table_b = read_intensity_table(&table_b_path)?;
    let (sample_a, sample_b) = (cfg_a.sample()?, cfg_b.sample()?);
    let (setup_a, setup_b) = (cfg_a.sensor_setup(), cfg_b.sensor_setup());
    let protocol_b = args.protocol_b.unwrap_or(args.protocol);
    let grid = match args.grid {
        Some(g) => g.points(),
        None => overlap_grid(&table_a, &table_b)?,
    };
    let mut out = CsvTable::new(["intensity_mw_um2", "eta_a", "eta_b", "ratio_a_over_b"]);
    for i in grid {
        let ea = volume_normalized_sensitivity(
            &sample_a,
            &table_a,
            intensity(i)?,
            args.protocol,
            &setup_a,
        )?;
        let eb = volume_normalized_sensitivity(
            &sample_b,
            &table_b,
            intensity(i)?,
            protocol_b,
            &setup_b,
        )?;
        out.push(vec![i, ea.eta, eb.eta, ea.eta / eb.eta]);
    }
    let mut inputs: Vec<&Path> = Vec::new();
    inputs.extend(path_a.as_deref());
    if path_b != path_a {
        inputs.extend(path_b.as_deref());
    }
    inputs.push(&args.table_a);
    if table_b_path != args.table_a {
        inputs.push(&table_b_path);
    }
    check_output(&args.out, &inputs)?;
    let config =
        json!({"a": cfg_a, "b": cfg_b, "protocol_a": args.protocol, "protocol_b": protocol_b});
    emit_csv(&args.out, &out, &mut ctx.manifest(&config, &inputs)?)
}

fn simulate(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let params = cfg.photophysics;
    let isat = args.isat.unwrap_or(params.i_sat_band.0);
    let s = intensity(args.intensity)?.saturation(intensity(isat)?);
    let dt = args
        .dt
        .unwrap_or(params.max_dt(s).min(0.1 / FILTER_CUTOFF_MHZ));
    let t_end = args.t_end.unwrap_or(default_run_length(&params, s));
    if args.max_rows < 2 {
        return Err(Error::invalid("--max-rows must be >= 2"));
    }
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let stride = steps.div_ceil(args.max_rows - 1).max(1);
    let curve = protocol_curve(
        &params,
        s,
        StateVector::MS1,
        StateVector::MS0,
        t_end,
        dt,
        stride,
    )?;
    let mut out = CsvTable::new(["t_us", "pl_rate_per_us", "contrast"]);
    for k in 0..curve.len() {
        out.push(vec![curve.t_us[k], curve.sig[k], curve.contrast[k]]);
    }
    let inputs = inputs_with(&cfg_path, &[]);
    check_output(&args.out, &inputs)?;
    let config = json!({"config": cfg, "intensity_mw_um2": args.intensity, "i_sat_mw_um2": isat, "dt_us": dt, "t_end_us": t_end, "stride": stride});
    emit_csv(&args.out, &out, &mut ctx.manifest(&config, &inputs)?)?;
    match initialization_time(&curve.t_us, &curve.contrast) {
        Ok(t) => println!("s = {s:.6}, t_I = {t:.6} us"),
        Err(e) => eprintln!("warning: no initialization time: {e}"),
    }
    Ok(())
}

fn ti_band_cmd(ctx: &Context, args: TiBandArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let intensities = args
        .grid
        .points()
        .into_iter()
        .map(intensity)
        .collect::<Result<Vec<_>>>()?;
    let band = ti_band(&cfg.photophysics, &intensities)?;
    let mut out = CsvTable::new(["intensity_mw_um2", "t_i_isat_lower_us", "t_i_isat_upper_us"]);
    for k in 0..band.intensity.len() {
        out.push(vec![band.intensity[k], band.lower[k], band.upper[k]]);
    }
    let inputs = inputs_with(&cfg_path, &[]);
    check_output(&args.out, &inputs)?;
    emit_csv(&args.out, &out, &mut ctx.manifest(&cfg, &inputs)?)
}

fn ramsey_synth(ctx: &Context, args: SynthArgs) -> Result<()> {
    let (mut cfg, cfg_path) = ctx.config(None)?;
    let r = &mut cfg.ramsey;
    let m = &mut r.model;
    m.t2_star = args.t2.unwrap_or(m.t2_star);
    m.p = args.p.unwrap_or(m.p);
    m.detuning = args.detuning.unwrap_or(m.detuning);
    m.hyperfine_splitting = args.hyperfine.unwrap_or(m.hyperfine_splitting);
    m.n_hyperfine = args.n_hyperfine.unwrap_or(m.n_hyperfine);
    m.amplitude = args.amplitude.unwrap_or(m.amplitude);
    r.noise_sigma = args.noise.unwrap_or(r.noise_sigma);
    r.n_samples = args.n.unwrap_or(r.n_samples);
    r.dt_us = args.dt.unwrap_or(r.dt_us);
    let seed = ctx.seed.unwrap_or(0);
    let tau = ramsey::uniform_grid(r.n_samples, r.dt_us);
    let signal = ramsey::synthesize(&r.model, &tau, r.noise_sigma, seed)?;
    let mut out = CsvTable::new(["tau_us", "contrast"]);
    for (t, y) in signal.tau_us.iter().zip(&signal.signal) {
        out.push(vec![*t, *y]);
    }
    let inputs = inputs_with(&cfg_path, &[]);
    check_output(&args.out, &inputs)?;
    let mut manifest = ctx.manifest(&cfg, &inputs)?;
    manifest.add_seed(seed);
    emit_csv(&args.out, &out, &mut manifest)
}

fn ramsey_fit(ctx: &Context, args: FitArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let signal = read_ramsey_signal(&args.signal)?;
    let fit_cfg = FitConfig {
        n_hyperfine: args.n_hyperfine,
        ..FitConfig::default()
    };
    let fit = ramsey::fit(&signal, &fit_cfg)?;
    let summary = json!({
        "t2_star_us": fit.t2_star.paren(),
        "p": fit.p.paren(),
        "detuning_mhz": fit.detuning.paren(),
        "hyperfine_mhz": fit.hyperfine_splitting.as_ref().map(|e| e.paren()),
    });
    println!(
        "T2* = {} us, p = {}, detuning = {} MHz",
        fit.t2_star.paren(),
        fit.p.paren(),
        fit.detuning.paren()
    );
    let report = json!({"summary": summary, "fit": fit});
    let inputs = inputs_with(&cfg_path, &[&args.signal]);
    check_output(&args.out, &inputs)?;
    emit_json(&args.out, &report, &mut ctx.manifest(&cfg, &inputs)?)
}

fn parse_offset(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::invalid(format!("tile offset '{s}' is not ROW,COL"));
    let (r, c) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        r.trim().parse().map_err(|_| bad())?,
        c.trim().parse().map_err(|_| bad())?,
    ))
}

fn strain_analyze(ctx: &Context, args: AnalyzeArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let side = args
        .sidecar
        .clone()
        .unwrap_or_else(|| sidecar_path(&args.map));
    let map = read_strain_map(&args.map, Some(&side))?;
    let bins = match args.bin_width_khz.or(cfg.strain.bin_width_khz) {
        Some(w) => BinRule::Fixed(w),
        None => BinRule::FreedmanDiaconis,
    };
    let pcfg = PartitionConfig {
        bins,
        tile_offset: parse_offset(&args.tile_offset)?,
    };
    let other_rate = match args.other_rate_per_us {
        Some(r) => r,
        None => {
            spin_bath_budget(&cfg.sample()?, &cfg.bath)?.bath_rate()
                + cfg.dephasing.bias_rate_per_us
        }
    };
    let full = histogram_fwhm(&mean_subtract(&map)?, bins)?;
    let stats = partition_sweep(&map, &args.sizes.points(), &pcfg)?;
    let scaling = if stats.len() >= 3 {
        let s = scaling_metric(&stats, other_rate)?;
        println!(
            "metric exponent {:.4} +/- {:.4} over {} sizes",
            s.fit.exponent,
            s.fit.exponent_sigma,
            s.points.len()
        );
        Some(s)
    } else {
        None
    };
    let report = json!({
        "map": {
            "rows": map.rows(),
            "cols": map.cols(),
            "pixel_pitch_um": map.pixel_pitch_um,
            "orientation": map.orientation,
            "valid_pixels": map.valid_values().len(),
        },
        "full_map": full,
        "other_rate_per_us": other_rate,
        "sizes": stats,
        "scaling": scaling,
    });
    let inputs = inputs_with(&cfg_path, &[&args.map, &side]);
    check_output(&args.out, &inputs)?;
    emit_json(&args.out, &report, &mut ctx.manifest(&cfg, &inputs)?)
}

fn strain_synth(ctx: &Context, args: StrainSynthArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let model = SynthModel::from_name(&args.model)?;
    if args.out.extension().is_some_and(|e| e == "json") {
        return Err(Error::invalid(
            "strain map output must not end in .json (reserved for the sidecar)",
        ));
    }
    let seed = ctx.seed.unwrap_or(0);
    let map = crate::strainmap::synthesize(&model, args.rows, args.cols, args.pitch_um, seed)?;
    let inputs = inputs_with(&cfg_path, &[]);
    check_output(&args.out, &inputs)?;
    let side = sidecar_path(&args.out);
    check_output(&side, &inputs)?;
    let meta = StrainSidecar {
        pixel_pitch_um: map.pixel_pitch_um,
        orientation: map.orientation,
        units: "kHz".into(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes") + "\n";
    std::fs::write(&side, text).map_err(|e| crate::io::io_error(&side, e))?;
    let config = json!({"config": cfg, "model": model, "rows": args.rows, "cols": args.cols, "pixel_pitch_um": args.pitch_um});
    let mut manifest = ctx.manifest(&config, &inputs)?;
    manifest.add_seed(seed);
    manifest.record_output(&side)?;
    emit_csv(&args.out, &strain_map_csv(&map), &mut manifest)
}

fn charge_decompose(ctx: &Context, args: DecomposeArgs) -> Result<()> {
    let (cfg, cfg_path) = ctx.config(None)?;
    let measured = read_spectrum(&args.measured)?;
    let bm = read_spectrum(&args.basis_minus)?;
    let bz = read_spectrum(&args.basis_zero)?;
    let d = decompose(&measured, &bm, &bz, args.ratio, args.intensity)?;
    if d.outside_validated_regime {
        eprintln!("warning: intensity outside the validated regime of the spectral decomposition");
    }
    println!("psi = {:.6}", d.psi);
    let inputs = inputs_with(
        &cfg_path,
        &[&args.measured, &args.basis_minus, &args.basis_zero],
    );
    check_output(&args.out, &inputs)?;
    let config =
        json!({"config": cfg, "brightness_ratio": args.ratio, "intensity_mw_um2": args.intensity});
    let report: Value = json!(d);
    emit_json(&args.out, &report, &mut ctx.manifest(&config, &inputs)?)
}
