//! Deterministic stand-in for the physical rig.
//!
//! The world owns the ground-truth cable geometry, the end-effector pose, the
//! camera, and the two wall sockets. Sensing is synthesized from ground truth:
//! point clouds of the cable, a depth/intensity view of the socket wall, and a
//! splatted cable view for the pixel pipeline. A grasped cable hangs from the
//! gripper along a quasi-static quadratic drop whose magnitude grows with the
//! payload mass, which is how disturbance weights enter.
//!
//! Everything is reproducible: renders draw from streams keyed by
//! `(seed, stream, tick)` rather than shared mutable RNG state, so an
//! identical scenario and seed produce bitwise-identical trajectories.

use crate::cablemodel::QuadCoeffs;
use crate::cloud::{PointCloud, PointLabel};
use crate::controller::Twist;
use crate::frames::{frame_from_x_axis, FrameTree, RigidTransform, Vec3, WORLD};
use crate::perception::{CameraIntrinsics, DepthImage};
use crate::scenario::{Scenario, SensorConfig};
use nalgebra::Matrix6;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("socket is not visible from the camera")]
    SocketNotVisible,
    #[error("cable is not visible from the camera")]
    CableNotVisible,
    #[error("degenerate world: {0}")]
    Degenerate(String),
}

/// How the cable is held.
#[derive(Debug, Clone, PartialEq)]
pub enum Attachment {
    Free,
    Plugged { socket: String },
    /// Held by the gripper at the given arc distance from the tip.
    Grasped { arc_offset: f64 },
}

/// Ground-truth cable: a generator curve plus its current attachment.
#[derive(Debug, Clone)]
pub struct GroundTruthCable {
    pub coeffs: QuadCoeffs,
    /// Total arc length in meters.
    pub length: f64,
    /// Curve parameter of the far end; the tip is at y = 0.
    pub y_end: f64,
    pub attachment: Attachment,
}

/// Quasi-static sag: the dangling tip-side segment drops quadratically.
#[derive(Debug, Clone, Copy)]
pub struct SagModel {
    /// Grasp-to-tip arc length in meters.
    pub dangle_length: f64,
    /// Stiffness parameter, 1/m.
    pub kappa: f64,
    /// Payload mass in kg.
    pub mass: f64,
    /// Extra sag per kilogram, 1/kg.
    pub mass_gain: f64,
}

impl SagModel {
    /// Effective drop coefficient `kappa * (1 + mass * mass_gain)`.
    pub fn drop_coefficient(&self) -> f64 {
        self.kappa * (1.0 + self.mass * self.mass_gain)
    }
}

/// Tip frame of a cable hanging from `grasp`.
///
/// The dangling segment leaves the grasp opposite the grasp x axis and drops
/// by `c * u^2` (world-z) at distance `u` along it, `c` the drop coefficient.
/// The tip sits at `u = L` with its drop capped at `L`; the tip tangent is
/// rotated toward gravity by `atan(2 c L)`, and the returned frame's x axis
/// points back along the cable with the usual gravity-aligned completion.
pub fn apply_sag(grasp: &RigidTransform, sag: &SagModel) -> RigidTransform {
    assert!(sag.dangle_length > 0.0, "dangle length must be positive");
    let c = sag.drop_coefficient();
    let l = sag.dangle_length;
    let x_g = grasp.x_axis();
    let drop = (c * l * l).min(l);
    let origin = grasp.translation - x_g * l - Vec3::z() * drop;
    let tip_x = (x_g + Vec3::z() * (2.0 * c * l)).normalize();
    frame_from_x_axis(origin, tip_x).0
}

/// One wall socket. The ring renders only while the socket is empty.
#[derive(Debug, Clone)]
pub struct SocketState {
    pub name: String,
    pub pose: RigidTransform,
    pub radius: f64,
    pub ring_half_width: f64,
}

#[derive(Debug, Clone)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidTransform,
}

const STREAM_CLOUD: u64 = 1;
const STREAM_RANSAC: u64 = 2;

/// Build a ChaCha stream keyed by (seed, stream id, tick); every random draw
/// in the simulator comes from one of these, never from shared state.
pub fn stream_rng(seed: u64, stream: u64, tick: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&tick.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub tree: FrameTree,
    pub cable: GroundTruthCable,
    pub sim_time: f64,
    pub tick: u64,
    pub seed: u64,
    /// Active payload mass in kg, fed into the sag model.
    pub disturbance_mass: f64,
    pub kappa: f64,
    pub mass_gain: f64,
    pub jacobian: Matrix6<f64>,
    pub camera: CameraView,
    pub source_socket: SocketState,
    pub target_socket: SocketState,
    /// Scheduled (time, mass) payload changes, sorted by time.
    pending_disturbances: Vec<(f64, f64)>,
}

impl WorldState {
    pub const FRAME_EE: &'static str = crate::controller::FRAME_END_EFFECTOR;

    /// Assemble the world for one seeded run of a scenario.
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Result<WorldState, SimError> {
        let shape = scenario.shape_for_seed(seed);
        let coeffs = QuadCoeffs::new(
            (shape.a[0], shape.a[1], shape.a[2]),
            (shape.b[0], shape.b[1], shape.b[2]),
        );
        let y_end = solve_y_end(&coeffs, scenario.cable.length)?;

        let mut tree = FrameTree::new();
        tree.insert(Self::FRAME_EE, WORLD, scenario.task.ee_start)
            .expect("world parent always exists");

        let jacobian = match scenario.jacobian {
            Some(rows) => {
                let mut m = Matrix6::zeros();
                for (r, row) in rows.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        m[(r, c)] = *v;
                    }
                }
                m
            }
            None => Matrix6::identity(),
        };

        let mut pending: Vec<(f64, f64)> =
            scenario.disturbances.iter().map(|d| (d.time, d.mass)).collect();
        pending.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        Ok(WorldState {
            tree,
            cable: GroundTruthCable {
                coeffs,
                length: scenario.cable.length,
                y_end,
                attachment: Attachment::Plugged { socket: "source".to_string() },
            },
            sim_time: 0.0,
            tick: 0,
            seed,
            disturbance_mass: 0.0,
            kappa: scenario.cable.kappa,
            mass_gain: scenario.cable.mass_gain,
            jacobian,
            camera: CameraView {
                intrinsics: scenario.camera.intrinsics,
                pose: scenario.camera.pose,
            },
            source_socket: SocketState {
                name: "source".to_string(),
                pose: scenario.sockets.source,
                radius: scenario.sockets.radius,
                ring_half_width: scenario.sockets.ring_half_width,
            },
            target_socket: SocketState {
                name: "target".to_string(),
                pose: scenario.sockets.target,
                radius: scenario.sockets.radius,
                ring_half_width: scenario.sockets.ring_half_width,
            },
            pending_disturbances: pending,
        })
    }

    pub fn end_effector_pose(&self) -> RigidTransform {
        self.tree.world_pose(Self::FRAME_EE).expect("end-effector frame always present")
    }

    pub fn set_end_effector_pose(&mut self, pose: RigidTransform) {
        self.tree.insert(Self::FRAME_EE, WORLD, pose).expect("world parent always exists");
    }

    fn sag_model(&self, dangle: f64) -> SagModel {
        SagModel {
            dangle_length: dangle,
            kappa: self.kappa,
            mass: self.disturbance_mass,
            mass_gain: self.mass_gain,
        }
    }

    /// Ground-truth tip frame: x axis pointing from the tip into the cable.
    pub fn ground_truth_tip(&self) -> RigidTransform {
        match &self.cable.attachment {
            Attachment::Free | Attachment::Plugged { .. } => {
                let p = self.cable.coeffs.point_at(0.0);
                let tangent = self.cable.coeffs.tangent_at(0.0)
                    * if self.cable.y_end >= 0.0 { 1.0 } else { -1.0 };
                frame_from_x_axis(p, tangent).0
            }
            Attachment::Grasped { arc_offset } => {
                apply_sag(&self.end_effector_pose(), &self.sag_model(*arc_offset))
            }
        }
    }

    /// Dense ground-truth polyline of the visible cable, sag applied.
    ///
    /// While grasped only the dangling grasp-to-tip segment is returned (the
    /// far side is out of the modeled scene); the points run tip-first.
    pub fn cable_curve(&self, samples: usize) -> Vec<Vec3> {
        let n = samples.max(2);
        match &self.cable.attachment {
            Attachment::Free | Attachment::Plugged { .. } => (0..n)
                .map(|i| {
                    let y = self.cable.y_end * i as f64 / (n - 1) as f64;
                    self.cable.coeffs.point_at(y)
                })
                .collect(),
            Attachment::Grasped { arc_offset } => {
                let ee = self.end_effector_pose();
                let x_g = ee.x_axis();
                let sag = self.sag_model(*arc_offset);
                let c = sag.drop_coefficient();
                let l = *arc_offset;
                (0..n)
                    .map(|i| {
                        // Tip-first: u runs from L (tip) down to 0 (grasp).
                        let u = l * (1.0 - i as f64 / (n - 1) as f64);
                        ee.translation - x_g * u - Vec3::z() * (c * u * u).min(l)
                    })
                    .collect()
            }
        }
    }

    /// Exact curve points at parameters spaced uniformly in arc length,
    /// tip-first.
    fn curve_points_by_arc(&self, n: usize) -> Vec<Vec3> {
        let n = n.max(2);
        match &self.cable.attachment {
            Attachment::Free | Attachment::Plugged { .. } => {
                let k = 2048;
                let params: Vec<f64> =
                    (0..k).map(|i| self.cable.y_end * i as f64 / (k - 1) as f64).collect();
                let pts: Vec<Vec3> =
                    params.iter().map(|&y| self.cable.coeffs.point_at(y)).collect();
                resample_params_by_arc(&params, &pts, n)
                    .into_iter()
                    .map(|y| self.cable.coeffs.point_at(y))
                    .collect()
            }
            Attachment::Grasped { arc_offset } => {
                let ee = self.end_effector_pose();
                let x_g = ee.x_axis();
                let sag = self.sag_model(*arc_offset);
                let c = sag.drop_coefficient();
                let l = *arc_offset;
                let at = |u: f64| ee.translation - x_g * u - Vec3::z() * (c * u * u).min(l);
                let k = 2048;
                // Tip-first: u runs from L down to 0.
                let params: Vec<f64> =
                    (0..k).map(|i| l * (1.0 - i as f64 / (k - 1) as f64)).collect();
                let pts: Vec<Vec3> = params.iter().map(|&u| at(u)).collect();
                resample_params_by_arc(&params, &pts, n).into_iter().map(at).collect()
            }
        }
    }

    /// Synthesize one cable cloud: curve samples uniform in arc length,
    /// isotropic Gaussian noise, plus box-uniform outliers. Deterministic per
    /// (seed, tick).
    pub fn render_cloud(&self, cfg: &SensorConfig) -> PointCloud {
        let total = cfg.points_per_frame.max(2);
        let n_out =
            ((cfg.outlier_fraction * total as f64).round() as usize).min(total.saturating_sub(2));
        let n_curve = total - n_out;

        let dense = self.cable_curve(256);
        let curve_pts = self.curve_points_by_arc(n_curve);

        let mut rng = stream_rng(self.seed, STREAM_CLOUD, self.tick);
        let mut points = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for p in curve_pts {
            let noise = Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * cfg.noise_sigma;
            points.push(p + noise);
            labels.push(PointLabel::Cable);
        }

        if n_out > 0 {
            let (mut lo, mut hi) = (dense[0], dense[0]);
            for p in &dense {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let pad = 0.3;
            for _ in 0..n_out {
                points.push(Vec3::new(
                    rng.random_range(lo.x - pad..hi.x + pad),
                    rng.random_range(lo.y - pad..hi.y + pad),
                    rng.random_range(lo.z - pad..hi.z + pad),
                ));
                labels.push(PointLabel::Outlier);
            }
        }
        PointCloud::with_labels(points, labels)
    }

    /// RNG for the RANSAC sampler at the current tick.
    pub fn ransac_rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, STREAM_RANSAC, self.tick)
    }

    /// Integrate a body-frame twist over `dt`: the end-effector translates by
    /// `R * (v dt)` and composes the axis-angle rotation of `w dt`. A grasped
    /// cable follows through the sag map. Time always advances.
    pub fn step_plant(&mut self, twist: &Twist, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        if !twist.is_zero() {
            let ee = self.end_effector_pose();
            let r = ee.rotation_matrix();
            let dr = nalgebra::Rotation3::new(twist.angular * dt);
            let pose = RigidTransform::from_parts(
                ee.translation + r * (twist.linear * dt),
                &(r * dr.matrix()),
            );
            self.set_end_effector_pose(pose);
        }
        self.sim_time += dt;
        self.tick += 1;
    }

    /// Set the payload mass used by the sag model from now on.
    pub fn inject_disturbance(&mut self, mass: f64) {
        assert!(mass >= 0.0, "mass must be non-negative");
        self.disturbance_mass = mass;
    }

    /// Apply scheduled payload changes whose time has come.
    pub fn apply_due_disturbances(&mut self) {
        while let Some(&(time, mass)) = self.pending_disturbances.first() {
            if time <= self.sim_time {
                self.inject_disturbance(mass);
                self.pending_disturbances.remove(0);
            } else {
                break;
            }
        }
    }

    pub fn has_pending_disturbances(&self) -> bool {
        !self.pending_disturbances.is_empty()
    }

    /// Depth + intensity view of the socket wall: plane depth everywhere the
    /// ray hits, with a bright ring at every empty socket hole.
    pub fn render_socket_view(&self) -> Result<DepthImage, SimError> {
        let cam = &self.camera.intrinsics;
        let cam_pose = &self.camera.pose;
        let wall_point = self.target_socket.pose.translation;
        let wall_normal = self.target_socket.pose.x_axis();

        // The estimation target must be in front of the camera.
        let socket_cam = cam_pose.inverse().transform_point(&wall_point);
        if socket_cam.z <= 0.0 {
            return Err(SimError::SocketNotVisible);
        }

        let origin = cam_pose.translation;
        let r = cam_pose.rotation_matrix();
        let plane_d = wall_normal.dot(&wall_point);

        let occupied = |s: &SocketState| match &self.cable.attachment {
            Attachment::Plugged { socket } => socket == &s.name,
            _ => false,
        };
        let rings: Vec<&SocketState> = [&self.source_socket, &self.target_socket]
            .into_iter()
            .filter(|s| !occupied(s))
            .collect();

        let mut img = DepthImage::zeros(cam.width, cam.height);
        for py in 0..cam.height {
            for px in 0..cam.width {
                let dir = r
                    * Vec3::new(
                        (px as f64 - cam.cx) / cam.f,
                        (py as f64 - cam.cy) / cam.f,
                        1.0,
                    );
                let denom = wall_normal.dot(&dir);
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t = (plane_d - wall_normal.dot(&origin)) / denom;
                if t <= 0.0 {
                    continue;
                }
                let hit = origin + dir * t;
                let mut intensity = 0.0;
                for s in &rings {
                    let rho = (hit - s.pose.translation).norm();
                    if (rho - s.radius).abs() <= s.ring_half_width {
                        intensity = 1.0;
                    }
                }
                // Depth equals camera-frame z because the ray direction has
                // unit z in the camera frame.
                img.set(px, py, t, intensity);
            }
        }
        Ok(img)
    }

    /// Splat the ground-truth cable into a depth/intensity view for the pixel
    /// pipeline (mask + center pixel).
    pub fn render_cable_view(&self) -> Result<DepthImage, SimError> {
        let cam = &self.camera.intrinsics;
        let world_to_cam = self.camera.pose.inverse();
        let mut img = DepthImage::zeros(cam.width, cam.height);
        let mut visible = 0usize;
        for p in self.cable_curve(800) {
            let pc = world_to_cam.transform_point(&p);
            if pc.z <= 0.0 {
                continue;
            }
            let Ok((fx, fy)) = crate::perception::project(&pc, cam) else { continue };
            let (ix, iy) = (fx.round() as i64, fy.round() as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (x, y) = (ix + dx, iy + dy);
                    if x < 0 || y < 0 || x >= cam.width as i64 || y >= cam.height as i64 {
                        continue;
                    }
                    let (x, y) = (x as u32, y as u32);
                    let old = img.depth_at(x, y);
                    if old == 0.0 || pc.z < old {
                        img.set(x, y, pc.z, 1.0);
                    }
                }
            }
            if cam.contains_pixel(fx, fy) {
                visible += 1;
            }
        }
        if visible == 0 {
            return Err(SimError::CableNotVisible);
        }
        Ok(img)
    }
}

/// Resample a polyline into `n` points uniformly spaced in cumulative arc
/// length, endpoints preserved.
pub fn resample_by_arc(dense: &[Vec3], n: usize) -> Vec<Vec3> {
    assert!(dense.len() >= 2 && n >= 2);
    let mut cum = Vec::with_capacity(dense.len());
    cum.push(0.0);
    for w in dense.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-300);
        let frac = ((target - cum[seg]) / span).clamp(0.0, 1.0);
        out.push(dense[seg] + (dense[seg + 1] - dense[seg]) * frac);
    }
    out
}

/// Parameter values at which a parameterized curve (given as a dense table of
/// parameters and the matching points) is uniformly spaced in arc length.
fn resample_params_by_arc(params: &[f64], points: &[Vec3], n: usize) -> Vec<f64> {
    assert!(points.len() >= 2 && n >= 2 && params.len() == points.len());
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-300);
        let frac = ((target - cum[seg]) / span).clamp(0.0, 1.0);
        out.push(params[seg] + (params[seg + 1] - params[seg]) * frac);
    }
    out
}

/// Solve the curve parameter at which the generator curve reaches the given
/// arc length from y = 0, by bisection on a midpoint quadrature.
fn solve_y_end(coeffs: &QuadCoeffs, length: f64) -> Result<f64, SimError> {
    let arc = |upper: f64| -> f64 {
        let steps = 2048;
        let h = upper / steps as f64;
        (0..steps).map(|i| coeffs.tangent_at((i as f64 + 0.5) * h).norm() * h).sum()
    };
    let mut hi = length; // tangent norm >= 1, so arc(length) >= length
    if arc(hi) < length {
        return Err(SimError::Degenerate("curve arc length cannot reach target".to_string()));
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if arc(mid) < length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
