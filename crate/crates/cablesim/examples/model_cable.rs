//! Cable modeling: render a noisy cloud, crop and fold-filter it, fit the two
//! per-plane quadratics, and resample the ten-point chain.

use cablesim::cablemodel::{arc_lengths, build_model, fold_filter, tip_frame, TipEnd};
use cablesim::perception::{pass_through, PassThroughBounds};
use cablesim::scenario::Scenario;
use cablesim::simworld::WorldState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::default();
    let world = WorldState::from_scenario(&scenario, 0)?;

    let cloud = world.render_cloud(&scenario.sensor);
    println!(
        "rendered {} points (sigma {} m, {}% outliers)",
        cloud.len(),
        scenario.sensor.noise_sigma,
        scenario.sensor.outlier_fraction * 100.0
    );

    let bounds = PassThroughBounds {
        min: [Some(-0.6), Some(0.005), Some(-0.2)],
        max: [Some(0.8), Some(0.9), Some(0.9)],
    };
    let cropped = pass_through(&cloud, &bounds);
    let folded = fold_filter(&cropped, &scenario.modeling.fold)?;
    println!("kept {} -> {} points after pass-through and fold filter", cropped.len(), folded.len());

    let model = build_model(&folded, scenario.modeling.samples, TipEnd::MinY)?;
    let c = model.coeffs;
    println!("x(y) = {:+.4} {:+.4} y {:+.4} y^2", c.a0, c.a1, c.a2);
    println!("z(y) = {:+.4} {:+.4} y {:+.4} y^2", c.b0, c.b1, c.b2);
    println!("y range [{:.4}, {:.4}]", model.y_range.0, model.y_range.1);

    println!("chain ({} points, tip first):", model.chain.len());
    let ds = arc_lengths(&model.chain);
    for (i, p) in model.chain.points().iter().enumerate() {
        let d = if i == 0 { 0.0 } else { ds[i - 1] };
        println!("  p{:<2} ({:+.4}, {:+.4}, {:+.4})  d = {:.4} m", i + 1, p.x, p.y, p.z, d);
    }

    let tip = tip_frame(&model.chain)?;
    println!("cable_tip frame: {:?}", tip.to_array());
    let truth = world.ground_truth_tip();
    println!(
        "tip gap to ground truth: {:.2} mm",
        (tip.translation - truth.translation).norm() * 1e3
    );
    Ok(())
}
