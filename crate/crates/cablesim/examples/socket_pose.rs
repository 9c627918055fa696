//! Socket pose estimation: render the wall view, detect the hole circle, read
//! its depth, find the wall plane by RANSAC, and assemble the socket frame.

use cablesim::perception::{depth_to_cloud, detect_circle, ransac_plane};
use cablesim::scenario::Scenario;
use cablesim::simworld::WorldState;
use cablesim::taskfsm::estimate_socket;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::default();
    let world = WorldState::from_scenario(&scenario, 0)?;

    let img = world.render_socket_view()?;
    let det = detect_circle(&img, &scenario.perception.circle)?;
    println!(
        "circle: center ({:.2}, {:.2}) px, radius {:.2} px, score {:.2}",
        det.center.0, det.center.1, det.radius, det.score
    );

    let wall = depth_to_cloud(
        &img,
        &world.camera.intrinsics,
        &world.camera.pose,
        scenario.perception.wall_cloud_stride,
    );
    let mut cfg = scenario.perception.ransac;
    cfg.viewpoint = world.camera.pose.translation;
    let fit = ransac_plane(&wall, &cfg, &mut world.ransac_rng())?;
    println!(
        "wall plane: normal ({:.4}, {:.4}, {:.4}), offset {:.4}, {} inliers of {}",
        fit.normal.x,
        fit.normal.y,
        fit.normal.z,
        fit.offset,
        fit.inliers.len(),
        wall.len()
    );

    let est = estimate_socket(&world, &scenario)?;
    println!("socket frame [x y z roll pitch yaw]: {:?}", est.frame.to_array());
    let truth = &world.target_socket.pose;
    println!(
        "ground-truth gap: {:.2} mm position, {:.3} deg axis",
        (est.center - truth.translation).norm() * 1e3,
        est.normal.dot(&truth.x_axis()).clamp(-1.0, 1.0).acos().to_degrees()
    );
    Ok(())
}
