//! Grasp-point selection: cumulative arc distances along the chain and the
//! feasible band [d_min, d_max] for two different cables.

use cablesim::cablemodel::{arc_lengths, build_model, select_grasp, GraspSpec, TipEnd};
use cablesim::cloud::PointCloud;
use cablesim::scenario::Scenario;
use cablesim::simworld::{resample_by_arc, WorldState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::default();
    let world = WorldState::from_scenario(&scenario, 0)?;

    // Model from an exact ground-truth resample to keep the printout clean.
    let dense = world.cable_curve(2048);
    let cloud = PointCloud::new(resample_by_arc(&dense, 400));
    let model = build_model(&cloud, scenario.modeling.samples, TipEnd::MinY)?;
    let ds = arc_lengths(&model.chain);
    println!("arc distances from the tip:");
    for (s, d) in ds.iter().enumerate() {
        println!("  d_{} = {:.4} m", s + 1, d);
    }

    for (name, spec) in [
        ("power cable", GraspSpec::new(0.18, 0.30)?),
        ("HDMI cable", GraspSpec::new(0.12, 0.24)?),
    ] {
        match select_grasp(&model.chain, &spec) {
            Ok(g) => println!(
                "{name}: band [{:.2}, {:.2}] -> grasp at p{} (d = {:.4} m, point ({:+.3}, {:+.3}, {:+.3}))",
                spec.d_min,
                spec.d_max,
                g.arc_index + 1,
                g.arc_distance,
                g.point.x,
                g.point.y,
                g.point.z
            ),
            Err(e) => println!("{name}: {e}"),
        }
    }
    Ok(())
}
