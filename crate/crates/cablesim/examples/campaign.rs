//! A 20-seed campaign over the canonical scenario: every seed runs the full
//! plug task, artifacts land in `out/campaign`, and the aggregate report is
//! printed.

use cablesim::cli::{self, RunMode, RunSpec};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join("canonical.json");
    let out = Path::new("out").join("campaign");
    let spec = RunSpec {
        scenario,
        seeds: (0..20).collect(),
        out_dir: out.clone(),
        mode: RunMode::FullTask,
        overrides: vec![],
        input_cloud: None,
    };
    let report = cli::run(&spec)?;
    print!("{}", report.summary());

    let table = cli::report(&out)?;
    println!("\nper-run table (also in {}):", out.join("report.csv").display());
    print!("{table}");
    std::fs::write(out.join("report.csv"), &table)?;
    Ok(())
}
