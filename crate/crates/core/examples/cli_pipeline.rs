// A small end-to-end run of the `nvsk` command line in a scratch
// directory: a configured dephasing budget, a Ramsey synthesize/fit
// round trip and a strain-map analysis, each leaving a manifest.
//
// ```bash
// cargo run --release --example cli_pipeline
// ```

use std::path::{Path, PathBuf};

use nvsk::cli::main_with_args;

fn nvsk(dir: &Path, args: &[&str]) -> nvsk::Result<()> {
    let mut argv = vec!["nvsk".to_string()];
    argv.extend(
        args.iter()
            .map(|a| a.replace("{dir}", &dir.display().to_string())),
    );
    println!("$ {}", argv.join(" "));
    match main_with_args(&argv) {
        0 => Ok(()),
        code => Err(nvsk::Error::invalid(format!("command exited with {code}"))),
    }
}

/// Runs the pipeline and returns the scratch directory holding its outputs.
pub fn run_example() -> nvsk::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("nvsk-cli-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("sample.cfg"),
        "[sample]\n\
         ns0_ppm = 0.8\n\
         c13_ppm = 108\n\
         nv_ppm = 0.39 [ppm]\n\
         psi = 0.2\n",
    )?;

    nvsk(
        &dir,
        &[
            "--config",
            "{dir}/sample.cfg",
            "dephasing",
            "--strain-fwhm-khz",
            "15",
            "--out",
            "{dir}/budget.json",
        ],
    )?;
    nvsk(
        &dir,
        &[
            "--seed",
            "7",
            "ramsey",
            "synth",
            "--t2",
            "17.7",
            "--noise",
            "4e-4",
            "--n",
            "1400",
            "--out",
            "{dir}/ramsey.csv",
        ],
    )?;
    nvsk(
        &dir,
        &[
            "ramsey",
            "fit",
            "{dir}/ramsey.csv",
            "--out",
            "{dir}/ramsey_fit.json",
        ],
    )?;
    nvsk(
        &dir,
        &[
            "--seed",
            "3",
            "strain",
            "synth",
            "--rows",
            "300",
            "--cols",
            "300",
            "--out",
            "{dir}/map.csv",
        ],
    )?;
    nvsk(
        &dir,
        &[
            "strain",
            "analyze",
            "{dir}/map.csv",
            "--sizes",
            "36:900:log:6",
            "--out",
            "{dir}/strain.json",
        ],
    )?;

    let mut names: Vec<_> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    println!("outputs in {}:", dir.display());
    for n in names {
        println!("  {n}");
    }
    Ok(dir)
}

#[allow(dead_code)]
fn main() -> nvsk::Result<()> {
    run_example().map(|_| ())
}
