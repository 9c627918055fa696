use anyhow::Context;
use cablesim::cli::{self, RunMode, RunSpec};
use clap::Parser;
use std::path::PathBuf;

/// Deterministic cable-manipulation simulation: run seeded plug-task trials or
/// isolated pipeline stages, or aggregate a directory of run metrics.
#[derive(Parser, Debug)]
#[command(name = "cablesim", version, about)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long, required_unless_present = "report")]
    scenario: Option<PathBuf>,

    /// Seeds to run: `a..b` (half-open) or a comma-separated list.
    #[arg(long, default_value = "0..1")]
    seeds: String,

    /// full-task | fit-only | perceive-only | align-only
    #[arg(long, default_value = "full-task")]
    mode: String,

    /// Output directory for traces, metrics, and the campaign report.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Dot-path config override, repeatable: e.g. --override control.gains.kp=1.5
    #[arg(long = "override")]
    overrides: Vec<String>,

    /// Stored point-cloud file for fit-only mode (otherwise a frame is rendered).
    #[arg(long)]
    cloud: Option<PathBuf>,

    /// Aggregate the metrics files in this directory into report.csv and exit.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() {
    let args = Args::parse();
    match run(args) {
        Ok(true) => std::process::exit(0),
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(args: Args) -> anyhow::Result<bool> {
    if let Some(dir) = args.report {
        let csv = cli::report(&dir)?;
        print!("{csv}");
        let out = dir.join("report.csv");
        std::fs::write(&out, &csv).with_context(|| format!("writing {}", out.display()))?;
        eprintln!("wrote {}", out.display());
        return Ok(true);
    }

    let mode = RunMode::parse(&args.mode)
        .with_context(|| format!("unknown mode {:?} (full-task | fit-only | perceive-only | align-only)", args.mode))?;
    let spec = RunSpec {
        scenario: args.scenario.expect("clap enforces --scenario"),
        seeds: cli::parse_seeds(&args.seeds)?,
        out_dir: args.out,
        mode,
        overrides: args.overrides,
        input_cloud: args.cloud,
    };
    let report = cli::run(&spec)?;
    print!("{}", report.summary());
    Ok(report.all_succeeded())
}
