//! Five-phase plug-task orchestration.
//!
//! The task walks Initialize -> Grasp -> Unplug -> PreInsert -> Insert -> Done,
//! driven by events from the perception/modeling/control stages. Transitions
//! live in a pure table ([`advance`]); the driver ([`run_task`]) produces the
//! events by running the vision pipeline and the alignment controller against
//! the simulated world, and never panics on stage failures: they terminate the
//! run with a reason in the metrics.

use crate::cablemodel::{
    build_model, fold_filter, select_grasp, tip_frame, CableModel, ModelError, TipEnd,
};
use crate::cloud::PointCloud;
use crate::controller::{
    alignment_loop, AlignmentOutcome, AlignmentRow, TipEstimator, Twist, FRAME_CABLE_TIP,
    FRAME_PRE_INSERT,
};
use crate::frames::{RigidTransform, Vec3, WORLD};
use crate::perception::{
    back_project, bbox_oracle, depth_to_cloud, detect_circle, object_center, pass_through,
    ransac_plane, socket_frame, PassThroughBounds, PerceptionError, SocketEstimate,
};
use crate::scenario::{ModelingConfig, Scenario, SensorConfig};
use crate::simworld::{Attachment, SimError, WorldState};
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

/// Task phase, including the two terminal states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Initialize,
    Grasp,
    Unplug,
    PreInsert,
    Insert,
    Done,
    Failed(FailReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailReason {
    Timeout,
    PerceptionLost,
    NoFeasibleGrasp,
    AlignmentFailed,
    InsertMissed,
    ModelingFailed,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Initialize => "initialize",
            Phase::Grasp => "grasp",
            Phase::Unplug => "unplug",
            Phase::PreInsert => "pre-insert",
            Phase::Insert => "insert",
            Phase::Done => "done",
            Phase::Failed(_) => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Done | Phase::Failed(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TaskEvent {
    SocketFound,
    ModelReady,
    GraspReached,
    UnplugComplete,
    Aligned,
    Inserted,
    Timeout,
    PerceptionLost,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("event {event:?} is not valid in phase {phase:?}")]
pub struct ProtocolViolation {
    pub phase: Phase,
    pub event: TaskEvent,
}

/// The pure transition table. Undefined (phase, event) pairs are protocol
/// violations, never silently ignored.
pub fn advance(phase: Phase, event: TaskEvent) -> Result<Phase, ProtocolViolation> {
    use Phase::*;
    use TaskEvent::*;
    match (phase, event) {
        (Initialize, SocketFound) => Ok(Initialize),
        (Initialize, ModelReady) => Ok(Grasp),
        (Initialize, PerceptionLost) => Ok(Initialize),
        (Grasp, GraspReached) => Ok(Unplug),
        (Unplug, UnplugComplete) => Ok(PreInsert),
        (PreInsert, Aligned) => Ok(Insert),
        (Insert, Inserted) => Ok(Done),
        (p, Timeout) if !p.is_terminal() => Ok(Failed(FailReason::Timeout)),
        (p, PerceptionLost) if !p.is_terminal() => Ok(Failed(FailReason::PerceptionLost)),
        _ => Err(ProtocolViolation { phase, event }),
    }
}

/// Pose in front of the socket: the socket frame translated by `standoff`
/// meters along its own x axis, which points out of the wall toward the
/// approach side. Rotation is preserved.
pub fn pre_insert_frame(socket: &RigidTransform, standoff: f64) -> RigidTransform {
    socket.compose(&RigidTransform::from_translation(standoff, 0.0, 0.0))
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("too few points after filtering ({0})")]
    TooFewPoints(usize),
}

/// The per-tick sensing stack: cloud render, bounding box, center pixel,
/// pass-through crop, plug exclusion, fold filter, dual-plane fit.
pub struct VisionPipeline {
    sensor: SensorConfig,
    modeling: ModelingConfig,
    /// Estimated socket frame; set once socket estimation has run.
    pub socket_frame: Option<RigidTransform>,
    source_socket_pos: Vec3,
    /// True once the plug has left the socket, enabling plug exclusion.
    pub plug_exposed: bool,
    pub last_model: Option<CableModel>,
    pub last_tip: Option<RigidTransform>,
}

impl VisionPipeline {
    pub fn new(scenario: &Scenario, world: &WorldState) -> Self {
        VisionPipeline {
            sensor: scenario.sensor,
            modeling: scenario.modeling.clone(),
            socket_frame: None,
            source_socket_pos: world.source_socket.pose.translation,
            plug_exposed: false,
            last_model: None,
            last_tip: None,
        }
    }

    /// World-axis pass-through box around the object center, with the wall
    /// side tightened along whichever world axis carries the socket normal.
    pub fn make_bounds(&self, center: Vec3) -> PassThroughBounds {
        let m = self.modeling.pass_margins;
        let mut b = PassThroughBounds::default();
        for axis in 0..3 {
            b.min[axis] = Some(center[axis] - m[axis]);
            b.max[axis] = Some(center[axis] + m[axis]);
        }
        if let Some(sf) = &self.socket_frame {
            let x = sf.x_axis();
            for axis in 0..3 {
                if x[axis] > 0.9 {
                    let wall = sf.translation[axis] + self.modeling.wall_clearance;
                    b.min[axis] = Some(b.min[axis].unwrap().max(wall));
                } else if x[axis] < -0.9 {
                    let wall = sf.translation[axis] - self.modeling.wall_clearance;
                    b.max[axis] = Some(b.max[axis].unwrap().min(wall));
                }
            }
        }
        b
    }

    fn tip_reference(&self) -> Vec3 {
        self.last_tip.map(|t| t.translation).unwrap_or(self.source_socket_pos)
    }

    /// Run the full sensing stack once and cache the model and tip estimate.
    pub fn sense_model(&mut self, world: &WorldState) -> Result<&CableModel, PipelineError> {
        let cam = &world.camera.intrinsics;
        let cam_pose = &world.camera.pose;

        let cloud = world.render_cloud(&self.sensor);

        // Bounding box from ground truth (detector stand-in), then the mask
        // pixels inside it, ordered top-to-bottom left-to-right.
        let view = world.render_cable_view()?;
        let truth = world.cable_curve(400);
        let bbox = bbox_oracle(&truth, cam_pose, cam, self.modeling.bbox_margin)?;
        let pixels: Vec<(u32, u32)> = view
            .mask_pixels(self.modeling.mask_threshold)
            .into_iter()
            .filter(|&p| bbox.contains(p))
            .collect();
        let oc = object_center(&pixels, &view, cam)?;
        let center_world = cam_pose.transform_point(&oc.center_camera);

        let bounds = self.make_bounds(center_world);
        let cropped = pass_through(&cloud, &bounds);
        if cropped.len() < 10 {
            return Err(PipelineError::TooFewPoints(cropped.len()));
        }

        // Tip side: the y extreme nearer the previous tip estimate (or the
        // source socket before any estimate exists).
        let reference = self.tip_reference();
        let (lo_pt, hi_pt) = robust_y_extremes(&cropped);
        let tip_end = if (lo_pt - reference).norm() <= (hi_pt - reference).norm() {
            TipEnd::MinY
        } else {
            TipEnd::MaxY
        };

        let mut fold_cfg = self.modeling.fold;
        fold_cfg.tip_end = tip_end;
        let folded = fold_filter(&cropped, &fold_cfg)?;

        // With the plug exposed, drop the rigid plug segment: everything
        // within the configured arc of the tip-side extremity.
        let modeled = if self.plug_exposed && self.modeling.plug_exclusion > 0.0 {
            let extremity = match tip_end {
                TipEnd::MinY => {
                    *folded
                        .points
                        .iter()
                        .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
                        .expect("folded output is nonempty")
                }
                TipEnd::MaxY => {
                    *folded
                        .points
                        .iter()
                        .max_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
                        .expect("folded output is nonempty")
                }
            };
            let ex = self.modeling.plug_exclusion;
            folded.filter_by_index(|i| (folded.points[i] - extremity).norm() >= ex)
        } else {
            folded
        };
        if modeled.len() < 10 {
            return Err(PipelineError::TooFewPoints(modeled.len()));
        }

        let model = build_model(&modeled, self.modeling.samples, tip_end)?;
        let tip = tip_frame(&model.chain)?;
        self.last_model = Some(model);
        self.last_tip = Some(tip);
        Ok(self.last_model.as_ref().unwrap())
    }
}

/// Tip-side and far-side representatives of the cloud's y range: the
/// componentwise medians of the lowest and highest ~5%-of-points-by-y sets.
/// Single strays beyond the cable ends cannot capture a representative.
fn robust_y_extremes(cloud: &PointCloud) -> (Vec3, Vec3) {
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    idx.sort_by(|&a, &b| cloud.points[a].y.partial_cmp(&cloud.points[b].y).unwrap());
    let window = (cloud.len() / 20).max(1).min(cloud.len());
    let rep = |ids: &[usize]| -> Vec3 {
        let mut c = Vec3::zeros();
        for axis in 0..3 {
            let mut vals: Vec<f64> = ids.iter().map(|&i| cloud.points[i][axis]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c[axis] = vals[vals.len() / 2];
        }
        c
    };
    (rep(&idx[..window]), rep(&idx[idx.len() - window..]))
}

impl TipEstimator for VisionPipeline {
    fn estimate_tip(&mut self, world: &WorldState) -> Option<RigidTransform> {
        match self.sense_model(world) {
            Ok(_) => self.last_tip,
            Err(e) => {
                if std::env::var_os("CABLESIM_DEBUG_VISION").is_some() {
                    eprintln!(
                        "[vision] tick {} t={:.3}: sense failed: {e}",
                        world.tick, world.sim_time
                    );
                }
                None
            }
        }
    }
}

/// One-shot socket pose estimation from the current socket view: circle
/// detection, depth lookup at the center, back-projection, wall RANSAC, frame
/// assembly.
pub fn estimate_socket(
    world: &WorldState,
    scenario: &Scenario,
) -> Result<SocketEstimate, PipelineError> {
    let cam = &world.camera.intrinsics;
    let cam_pose = &world.camera.pose;
    let img = world.render_socket_view()?;
    let det = detect_circle(&img, &scenario.perception.circle)?;
    let (px, py) = (det.center.0.round(), det.center.1.round());
    if !cam.contains_pixel(px, py) {
        return Err(PerceptionError::NotVisible.into());
    }
    let depth = img.depth_at(px as u32, py as u32);
    let cam_pt = back_project(det.center, depth, cam)?;
    let center_world = cam_pose.transform_point(&cam_pt);

    let wall_cloud = depth_to_cloud(&img, cam, cam_pose, scenario.perception.wall_cloud_stride);
    let mut ransac_cfg = scenario.perception.ransac;
    ransac_cfg.viewpoint = cam_pose.translation;
    let mut rng = world.ransac_rng();
    let fit = ransac_plane(&wall_cloud, &ransac_cfg, &mut rng)?;

    let (frame, fallback) = socket_frame(center_world, fit.normal);
    Ok(SocketEstimate {
        pixel_center: det.center,
        center: center_world,
        normal: fit.normal,
        frame,
        completion_fallback: fallback,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDuration {
    pub phase: &'static str,
    pub seconds: f64,
}

/// Per-run result summary, serialized as the metrics JSON.
#[derive(Debug, Clone, Serialize)]
pub struct TaskMetrics {
    pub seed: u64,
    /// `"done"` or `"failed:<reason>"`.
    pub outcome: String,
    pub success: bool,
    pub phase_durations: Vec<PhaseDuration>,
    pub total_duration: f64,
    pub align_converged: bool,
    pub align_iterations: usize,
    /// Ground-truth tip position error to the target socket at the end, m.
    pub final_position_error: f64,
    /// Ground-truth tip axis error to the socket normal at the end, rad.
    pub final_angle_error: f64,
}

/// One per-tick trace record across all phases.
#[derive(Debug, Clone)]
pub struct TaskRow {
    pub tick: u64,
    pub time: f64,
    pub phase: &'static str,
    pub ee_pose: [f64; 6],
    pub tip_pose: [f64; 6],
    pub deviation: [f64; 6],
    pub twist: [f64; 6],
    pub joint_velocities: [f64; 6],
    pub converged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TaskTrace {
    pub rows: Vec<TaskRow>,
}

pub fn write_task_trace_csv(w: &mut impl Write, trace: &TaskTrace) -> io::Result<()> {
    write!(w, "tick,time,phase")?;
    for group in ["ee", "tip"] {
        for c in ["x", "y", "z", "roll", "pitch", "yaw"] {
            write!(w, ",{group}_{c}")?;
        }
    }
    writeln!(
        w,
        ",dev_x,dev_y,dev_z,dev_roll,dev_pitch,dev_yaw,\
         twist_vx,twist_vy,twist_vz,twist_wx,twist_wy,twist_wz,\
         qd_1,qd_2,qd_3,qd_4,qd_5,qd_6,converged"
    )?;
    for r in &trace.rows {
        write!(w, "{},{:?},{}", r.tick, r.time, r.phase)?;
        for v in r
            .ee_pose
            .iter()
            .chain(r.tip_pose.iter())
            .chain(r.deviation.iter())
            .chain(r.twist.iter())
            .chain(r.joint_velocities.iter())
        {
            write!(w, ",{v:?}")?;
        }
        writeln!(w, ",{}", r.converged)?;
    }
    Ok(())
}

struct Driver<'a> {
    world: &'a mut WorldState,
    scenario: &'a Scenario,
    phase: Phase,
    trace: TaskTrace,
    phase_starts: Vec<(&'static str, f64)>,
    align_converged: bool,
    align_iterations: usize,
}

impl<'a> Driver<'a> {
    fn enter(&mut self, phase: Phase) {
        self.phase = phase;
        if !phase.is_terminal() {
            self.phase_starts.push((phase.name(), self.world.sim_time));
        }
    }

    fn timed_out(&self) -> bool {
        self.world.sim_time >= self.scenario.task.timeout
    }

    fn log(&mut self, tip: Option<RigidTransform>, dev: [f64; 6], twist: [f64; 6], qd: [f64; 6]) {
        self.trace.rows.push(TaskRow {
            tick: self.world.tick,
            time: self.world.sim_time,
            phase: self.phase.name(),
            ee_pose: self.world.end_effector_pose().to_array(),
            tip_pose: tip.map(|t| t.to_array()).unwrap_or([f64::NAN; 6]),
            deviation: dev,
            twist,
            joint_velocities: qd,
            converged: false,
        });
    }

    fn idle_tick(&mut self, tip: Option<RigidTransform>) {
        self.log(tip, [f64::NAN; 6], [0.0; 6], [0.0; 6]);
        self.world.step_plant(&Twist::ZERO, self.scenario.control.gains.period);
        self.world.apply_due_disturbances();
    }

    /// Drive the end-effector along a straight world-frame direction at the
    /// given speed for `distance` meters, ticking the vision stack along.
    fn straight_motion(
        &mut self,
        dir_world: Vec3,
        speed: f64,
        distance: f64,
        vision: &mut VisionPipeline,
        mut stop: impl FnMut(&WorldState) -> bool,
    ) -> MotionEnd {
        let dt = self.scenario.control.gains.period;
        let dir = dir_world.normalize();
        let mut traveled = 0.0;
        while traveled < distance {
            if self.timed_out() {
                return MotionEnd::Timeout;
            }
            let ee = self.world.end_effector_pose();
            let body_linear = ee.rotation_matrix().transpose() * (dir * speed);
            let twist = Twist { linear: body_linear, angular: Vec3::zeros() };
            let qd = crate::controller::resolve_joints(&twist, &self.world.jacobian);
            let applied = Twist::from_vector(&(self.world.jacobian * qd));
            let tip = vision.estimate_tip(self.world).or(vision.last_tip);
            self.log(tip, [f64::NAN; 6], twist.to_array(), qd.into());
            self.world.step_plant(&applied, dt);
            self.world.apply_due_disturbances();
            traveled += speed * dt;
            if stop(self.world) {
                return MotionEnd::Stopped;
            }
        }
        MotionEnd::Completed
    }

    fn finish(mut self, reason: Option<FailReason>) -> (TaskMetrics, TaskTrace) {
        if let Some(r) = reason {
            self.phase = Phase::Failed(r);
        }
        let end = self.world.sim_time;
        let mut durations = Vec::new();
        for (i, &(name, start)) in self.phase_starts.iter().enumerate() {
            let stop = self.phase_starts.get(i + 1).map(|&(_, t)| t).unwrap_or(end);
            durations.push(PhaseDuration { phase: name, seconds: stop - start });
        }
        let tip = self.world.ground_truth_tip();
        let socket = &self.world.target_socket.pose;
        let pos_err = (tip.translation - socket.translation).norm();
        let cos = tip.x_axis().dot(&socket.x_axis()).clamp(-1.0, 1.0);
        let outcome = match self.phase {
            Phase::Done => "done".to_string(),
            Phase::Failed(r) => format!("failed:{r:?}").to_lowercase(),
            other => format!("stopped:{}", other.name()),
        };
        let metrics = TaskMetrics {
            seed: self.world.seed,
            success: self.phase == Phase::Done,
            outcome,
            phase_durations: durations,
            total_duration: end,
            align_converged: self.align_converged,
            align_iterations: self.align_iterations,
            final_position_error: pos_err,
            final_angle_error: cos.acos(),
        };
        (metrics, self.trace)
    }
}

enum MotionEnd {
    Completed,
    Stopped,
    Timeout,
}

fn append_alignment_rows(trace: &mut TaskTrace, rows: &[AlignmentRow], dt: f64, phase: Phase) {
    for r in rows {
        trace.rows.push(TaskRow {
            tick: (r.time / dt).round() as u64,
            time: r.time,
            phase: phase.name(),
            ee_pose: r.ee_pose,
            tip_pose: r.tip_pose,
            deviation: r.deviation,
            twist: r.twist,
            joint_velocities: r.joint_velocities,
            converged: r.converged,
        });
    }
}

/// Execute the five-phase task in the given world. Failures terminate the run
/// with a reason in the metrics; this function does not panic on stage errors.
pub fn run_task(world: &mut WorldState, scenario: &Scenario) -> (TaskMetrics, TaskTrace) {
    let dt = scenario.control.gains.period;
    let mut vision = VisionPipeline::new(scenario, world);
    let mut d = Driver {
        world,
        scenario,
        phase: Phase::Initialize,
        trace: TaskTrace::default(),
        phase_starts: vec![(Phase::Initialize.name(), 0.0)],
        align_converged: false,
        align_iterations: 0,
    };

    // ---- Initialize: socket pose, then the first cable model.
    let socket_est = loop {
        if d.timed_out() {
            return d.finish(Some(FailReason::Timeout));
        }
        match estimate_socket(d.world, scenario) {
            Ok(est) => break est,
            Err(_) => {
                // Perception lost during Initialize re-enters Initialize.
                d.phase = advance(d.phase, TaskEvent::PerceptionLost)
                    .expect("initialize handles perception-lost");
                d.idle_tick(None);
            }
        }
    };
    d.phase = advance(d.phase, TaskEvent::SocketFound).expect("socket-found in initialize");
    d.world
        .tree
        .insert("Target_Socket", WORLD, socket_est.frame)
        .expect("world parent exists");
    vision.socket_frame = Some(socket_est.frame);

    loop {
        if d.timed_out() {
            return d.finish(Some(FailReason::Timeout));
        }
        match vision.sense_model(d.world) {
            Ok(_) => break,
            Err(_) => {
                d.phase =
                    advance(d.phase, TaskEvent::PerceptionLost).expect("initialize self-loop");
                d.idle_tick(None);
            }
        }
    }
    let tip = vision.last_tip.expect("model implies tip");
    d.world.tree.insert(FRAME_CABLE_TIP, WORLD, tip).expect("world parent exists");
    d.log(Some(tip), [f64::NAN; 6], [0.0; 6], [0.0; 6]);
    match advance(d.phase, TaskEvent::ModelReady) {
        Ok(p) => d.enter(p),
        Err(_) => unreachable!("model-ready is valid in initialize"),
    }

    // ---- Grasp: pick the grasp point and teleport the gripper there
    // (motion planning is out of scope; a configured duration stands in).
    let model = vision.last_model.as_ref().expect("model cached");
    let selection = match select_grasp(&model.chain, &scenario.grasp) {
        Ok(s) => s,
        Err(ModelError::NoFeasibleGrasp(_, _)) => {
            return d.finish(Some(FailReason::NoFeasibleGrasp));
        }
        Err(_) => return d.finish(Some(FailReason::ModelingFailed)),
    };
    let approach_ticks = (scenario.task.grasp_approach_duration / dt).ceil() as usize;
    for _ in 0..approach_ticks {
        if d.timed_out() {
            return d.finish(Some(FailReason::Timeout));
        }
        d.idle_tick(vision.last_tip);
    }
    d.world.set_end_effector_pose(selection.frame);
    d.world
        .tree
        .insert("cable", WORLD, selection.frame)
        .expect("world parent exists");
    d.world.cable.attachment = Attachment::Grasped { arc_offset: selection.arc_distance };
    match advance(d.phase, TaskEvent::GraspReached) {
        Ok(p) => d.enter(p),
        Err(_) => unreachable!("grasp-reached is valid in grasp"),
    }

    // ---- Unplug: straight pull along world y; the plug is exposed after.
    vision.plug_exposed = true;
    match d.straight_motion(
        Vec3::y(),
        scenario.task.unplug_speed,
        scenario.task.unplug_distance,
        &mut vision,
        |_| false,
    ) {
        MotionEnd::Completed | MotionEnd::Stopped => {}
        MotionEnd::Timeout => return d.finish(Some(FailReason::Timeout)),
    }
    match advance(d.phase, TaskEvent::UnplugComplete) {
        Ok(p) => d.enter(p),
        Err(_) => unreachable!("unplug-complete is valid in unplug"),
    }

    // ---- PreInsert: define the target frame and run the alignment loop.
    let pre = pre_insert_frame(&socket_est.frame, scenario.task.standoff);
    d.world.tree.insert(FRAME_PRE_INSERT, WORLD, pre).expect("world parent exists");
    let mut align_cfg = scenario.control;
    let remaining = ((scenario.task.timeout - d.world.sim_time) / dt).floor().max(0.0) as usize;
    align_cfg.max_iters = align_cfg.max_iters.min(remaining);
    let result = alignment_loop(d.world, &align_cfg, &mut vision);
    append_alignment_rows(&mut d.trace, &result.rows, dt, d.phase);
    d.align_converged = result.converged();
    d.align_iterations = result.iterations;
    match result.outcome {
        AlignmentOutcome::Converged => {}
        AlignmentOutcome::MaxIterations => {
            let reason = if d.timed_out() {
                FailReason::Timeout
            } else {
                FailReason::AlignmentFailed
            };
            return d.finish(Some(reason));
        }
        AlignmentOutcome::PerceptionLost => {
            d.phase = advance(d.phase, TaskEvent::PerceptionLost)
                .expect("perception-lost defined for pre-insert");
            return d.finish(None);
        }
    }
    match advance(d.phase, TaskEvent::Aligned) {
        Ok(p) => d.enter(p),
        Err(_) => unreachable!("aligned is valid in pre-insert"),
    }

    // ---- Insert: push along the aligned tip axis until the magnets capture.
    // At convergence the tip and pre-insert frames coincide within threshold,
    // so the pre-insert axis is the same direction without per-tick estimate
    // noise.
    let push_dir = -pre.x_axis();
    let socket_pose = d.world.target_socket.pose;
    let axis = socket_pose.x_axis();
    let captured = |w: &WorldState| {
        let tip = w.ground_truth_tip();
        let rel = tip.translation - socket_pose.translation;
        rel.dot(&axis) <= 0.0
    };
    let max_travel =
        scenario.task.standoff + scenario.modeling.plug_exclusion + scenario.task.insert_overshoot;
    let end = d.straight_motion(
        push_dir,
        scenario.task.insert_speed,
        max_travel,
        &mut vision,
        captured,
    );
    match end {
        MotionEnd::Timeout => return d.finish(Some(FailReason::Timeout)),
        MotionEnd::Completed => return d.finish(Some(FailReason::InsertMissed)),
        MotionEnd::Stopped => {}
    }
    // Crossed the socket plane: the magnets capture within their radius and
    // angle tolerance, otherwise the insertion misses.
    let tip_true = d.world.ground_truth_tip();
    let rel = tip_true.translation - socket_pose.translation;
    let axial = rel.dot(&axis);
    let radial = (rel - axis * axial).norm();
    let angle = tip_true.x_axis().dot(&axis).clamp(-1.0, 1.0).acos();
    if radial <= scenario.task.capture_radius && angle <= scenario.task.capture_angle {
        match advance(d.phase, TaskEvent::Inserted) {
            Ok(p) => d.enter(p),
            Err(_) => unreachable!("inserted is valid in insert"),
        }
        d.finish(None)
    } else {
        d.finish(Some(FailReason::InsertMissed))
    }
}
