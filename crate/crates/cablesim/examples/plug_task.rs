//! Run the full five-phase plug task once and print the phase log and metrics.

use cablesim::scenario::Scenario;
use cablesim::simworld::WorldState;
use cablesim::taskfsm::run_task;
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join("canonical.json");
    let scenario = Scenario::load(&scenario_path)?;
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0u64);

    let mut world = WorldState::from_scenario(&scenario, seed)?;
    let (metrics, trace) = run_task(&mut world, &scenario);

    println!("seed {seed} -> {}", metrics.outcome);
    println!("phases:");
    for d in &metrics.phase_durations {
        println!("  {:<11} {:>7.3} s", d.phase, d.seconds);
    }
    println!("total simulated time: {:.3} s", metrics.total_duration);
    println!(
        "alignment: converged={} after {} iterations",
        metrics.align_converged, metrics.align_iterations
    );
    println!(
        "final tip error: {:.4} m, {:.4} rad",
        metrics.final_position_error, metrics.final_angle_error
    );
    println!("trace rows: {}", trace.rows.len());

    // Phase transitions as seen by the trace.
    let mut last = "";
    for row in &trace.rows {
        if row.phase != last {
            println!("t={:>7.3}  -> {}", row.time, row.phase);
            last = row.phase;
        }
    }
    Ok(())
}
