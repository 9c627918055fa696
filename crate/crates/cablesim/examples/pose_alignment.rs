//! The pose-alignment loop on the ideal plant: start the end-effector offset
//! from the pre-insert frame and watch the PD servo pull the deviations under
//! the thresholds.

use cablesim::controller::{
    alignment_loop, AlignmentConfig, EndEffectorTip, FRAME_PRE_INSERT,
};
use cablesim::frames::{RigidTransform, Rpy, Vec3, WORLD};
use cablesim::scenario::Scenario;
use cablesim::simworld::WorldState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::default();
    let mut world = WorldState::from_scenario(&scenario, 0)?;

    let pre = RigidTransform::new(
        Vec3::new(0.35, 0.10, 0.30),
        Rpy::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
    );
    world.tree.insert(FRAME_PRE_INSERT, WORLD, pre)?;
    // 20 cm / 0.3 rad start offset.
    let offset = RigidTransform::new(Vec3::new(0.12, 0.14, -0.08), Rpy::new(0.1, -0.2, 0.2));
    world.set_end_effector_pose(pre.compose(&offset));

    let cfg = AlignmentConfig { max_iters: 500, ..AlignmentConfig::default() };
    let result = alignment_loop(&mut world, &cfg, &mut EndEffectorTip);

    println!("iter   |dev trans|   |dev rot|   |twist|   clamped");
    for row in result.rows.iter().step_by(5) {
        let t = (row.deviation[0].powi(2) + row.deviation[1].powi(2) + row.deviation[2].powi(2))
            .sqrt();
        let r = (row.deviation[3].powi(2) + row.deviation[4].powi(2) + row.deviation[5].powi(2))
            .sqrt();
        let v = row.twist.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "{:>4}   {:>9.5} m   {:>8.5} rad   {:>7.4}   {}",
            row.iteration, t, r, v, row.clamped
        );
    }
    println!(
        "{:?} after {} iterations; final deviation {:?}",
        result.outcome, result.iterations, result.final_deviation
    );
    Ok(())
}
