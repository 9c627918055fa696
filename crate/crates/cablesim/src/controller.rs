//! Pose-alignment control.
//!
//! The loop servos the cable tip onto the pre-insert frame: per tick it
//! measures the translational and rotational deviations in the end-effector
//! frame, maps them through the angular-rate matrix to a velocity-shaped error,
//! applies a PD law, clamps the command by norm, resolves joint velocities
//! through the Jacobian, and steps the plant. It terminates when every
//! tip-to-pre-insert deviation component is inside the thresholds.

use crate::frames::{normalize_angle, RigidTransform, Vec3};
use crate::simworld::WorldState;
use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("execution time must be positive, got {0}")]
    InvalidPeriod(f64),
}

/// Pose error split into translational (m) and rotational (rad) parts, the
/// rotational components normalized to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDeviation {
    pub translation: Vec3,
    /// Roll, pitch, yaw differences.
    pub rotation: Vec3,
}

impl PoseDeviation {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        )
    }

    pub fn to_array(&self) -> [f64; 6] {
        self.to_vector().into()
    }

    pub fn max_translation(&self) -> f64 {
        self.translation.abs().max()
    }

    pub fn max_rotation(&self) -> f64 {
        self.rotation.abs().max()
    }
}

/// 6-D velocity in the end-effector frame: linear (m/s) and angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub const ZERO: Twist = Twist { linear: Vec3::new(0.0, 0.0, 0.0), angular: Vec3::new(0.0, 0.0, 0.0) };

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist { linear: Vec3::new(v[0], v[1], v[2]), angular: Vec3::new(v[3], v[4], v[5]) }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn to_array(&self) -> [f64; 6] {
        self.to_vector().into()
    }

    pub fn is_zero(&self) -> bool {
        self.linear == Vec3::zeros() && self.angular == Vec3::zeros()
    }
}

/// PD gains plus the control period used for the derivative term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    pub kp: f64,
    pub kd: f64,
    /// Control period in seconds.
    pub period: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains { kp: 2.0, kd: 0.2, period: 1.0 / 30.0 }
    }
}

/// Convergence thresholds: translational (m) and rotational (rad).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub eps_translation: f64,
    pub eps_rotation: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { eps_translation: 0.01, eps_rotation: 0.02 }
    }
}

/// Cartesian speed limits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TwistLimits {
    pub max_linear: f64,
    pub max_angular: f64,
}

impl Default for TwistLimits {
    fn default() -> Self {
        TwistLimits { max_linear: 1.5, max_angular: 0.6 }
    }
}

/// Mutable PD state. The previous error starts unset so the first derivative
/// term is exactly zero.
#[derive(Debug, Clone, Default)]
pub struct ControlState {
    prev_error: Option<Vector6<f64>>,
    pub iterations: u64,
}

impl ControlState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.prev_error = None;
        self.iterations = 0;
    }
}

/// Componentwise pose difference `a - b`, rotational parts wrapped to the
/// shortest angle.
pub fn pose_deviation(a: &RigidTransform, b: &RigidTransform) -> PoseDeviation {
    PoseDeviation {
        translation: a.translation - b.translation,
        rotation: Vec3::new(
            normalize_angle(a.rotation.roll - b.rotation.roll),
            normalize_angle(a.rotation.pitch - b.rotation.pitch),
            normalize_angle(a.rotation.yaw - b.rotation.yaw),
        ),
    }
}

/// The matrix mapping roll-pitch-yaw deviation rates to body angular velocity,
/// evaluated at the given roll and pitch deviations.
pub fn angular_rate_matrix(droll: f64, dpitch: f64) -> Matrix3<f64> {
    let (sa, ca) = droll.sin_cos();
    let (sb, cb) = dpitch.sin_cos();
    Matrix3::new(1.0, 0.0, -sb, 0.0, ca, cb * sa, 0.0, -sa, cb * ca)
}

/// Turn a pose deviation into end-effector velocities over `dt` seconds:
/// linear part `(dx, dy, dz) / dt`, angular part
/// `M(droll, dpitch) * (droll, dpitch, dyaw) / dt`.
pub fn twist_from_deviation(d: &PoseDeviation, dt: f64) -> Result<Twist, ControlError> {
    if !(dt > 0.0) {
        return Err(ControlError::InvalidPeriod(dt));
    }
    let angular = angular_rate_matrix(d.rotation.x, d.rotation.y) * d.rotation / dt;
    Ok(Twist { linear: d.translation / dt, angular })
}

/// PD law `out = kp * e + kd * (e - e_prev) / period`; the derivative term is
/// zero on the first call. Updates the state.
pub fn pd_control(
    e: &Vector6<f64>,
    state: &mut ControlState,
    gains: &ControllerGains,
) -> Vector6<f64> {
    let de = match &state.prev_error {
        Some(prev) => (e - prev) / gains.period,
        None => Vector6::zeros(),
    };
    state.prev_error = Some(*e);
    state.iterations += 1;
    e * gains.kp + de * gains.kd
}

/// Scale (never truncate per-axis) the linear and angular parts so their norms
/// respect the limits; direction is preserved.
pub fn clamp_twist(t: &Twist, lim: &TwistLimits) -> Twist {
    let scale = |v: Vec3, max: f64| -> Vec3 {
        let n = v.norm();
        if n > max && n > 0.0 {
            v * (max / n)
        } else {
            v
        }
    };
    Twist { linear: scale(t.linear, lim.max_linear), angular: scale(t.angular, lim.max_angular) }
}

/// Damping used near singular Jacobians.
pub const DLS_LAMBDA: f64 = 0.01;
/// Smallest singular value below which the damped solve takes over.
pub const DLS_SIGMA_MIN: f64 = 1e-3;

/// Joint velocities realizing a Cartesian twist: plain inverse when the
/// Jacobian is well conditioned, damped least squares
/// `J^T (J J^T + lambda^2 I)^-1 x_dot` otherwise.
pub fn resolve_joints(t: &Twist, jacobian: &Matrix6<f64>) -> Vector6<f64> {
    let x_dot = t.to_vector();
    let svd = jacobian.svd(false, false);
    let sigma_min = svd.singular_values.min();
    if sigma_min >= DLS_SIGMA_MIN {
        if let Some(qd) = jacobian.lu().solve(&x_dot) {
            return qd;
        }
    }
    let jjt = jacobian * jacobian.transpose() + Matrix6::identity() * (DLS_LAMBDA * DLS_LAMBDA);
    let y = jjt.lu().solve(&x_dot).unwrap_or_else(Vector6::zeros);
    jacobian.transpose() * y
}

/// Provides the cable-tip pose in the world frame, once per control tick.
/// `None` means no estimate this tick; the loop tolerates staleness up to the
/// configured limit and reuses the last estimate.
pub trait TipEstimator {
    fn estimate_tip(&mut self, world: &WorldState) -> Option<RigidTransform>;
}

/// Ideal plant: the tip is taken to be the end-effector itself, so commanded
/// twists integrate directly into the measured pose.
pub struct EndEffectorTip;

impl TipEstimator for EndEffectorTip {
    fn estimate_tip(&mut self, world: &WorldState) -> Option<RigidTransform> {
        Some(world.end_effector_pose())
    }
}

/// Exact oracle: the simulator's ground-truth tip, sag included.
pub struct GroundTruthTip;

impl TipEstimator for GroundTruthTip {
    fn estimate_tip(&mut self, world: &WorldState) -> Option<RigidTransform> {
        Some(world.ground_truth_tip())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub gains: ControllerGains,
    pub thresholds: Thresholds,
    pub limits: TwistLimits,
    pub max_iters: usize,
    /// Divisor applied when turning deviations into the velocity-shaped error
    /// signal. With the default 1.0 the error is numerically the deviation,
    /// which keeps the discrete loop a contraction whenever kp * period < 1.
    pub execution_time: f64,
    /// Consecutive ticks the loop will run on a stale tip estimate before
    /// giving up.
    pub stale_limit: u32,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            gains: ControllerGains::default(),
            thresholds: Thresholds::default(),
            limits: TwistLimits::default(),
            max_iters: 2000,
            execution_time: 1.0,
            stale_limit: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlignmentOutcome {
    Converged,
    MaxIterations,
    PerceptionLost,
}

/// One control tick. `deviation` is the tip-to-pre-insert error the exit
/// condition is evaluated on; `twist` is the post-clamp command.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentRow {
    pub iteration: usize,
    pub time: f64,
    pub deviation: [f64; 6],
    pub twist: [f64; 6],
    pub joint_velocities: [f64; 6],
    pub converged: bool,
    pub clamped: bool,
    pub ee_pose: [f64; 6],
    pub tip_pose: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub outcome: AlignmentOutcome,
    pub iterations: usize,
    pub rows: Vec<AlignmentRow>,
    pub final_deviation: [f64; 6],
}

impl AlignmentResult {
    pub fn converged(&self) -> bool {
        self.outcome == AlignmentOutcome::Converged
    }
}

pub const FRAME_END_EFFECTOR: &str = "end-effector";
pub const FRAME_CABLE_TIP: &str = "cable_tip";
pub const FRAME_PRE_INSERT: &str = "pre-insert";

/// Run the pose-alignment loop until the tip-to-pre-insert deviations satisfy
/// both thresholds, iterating: estimate tip, compute frame-relative
/// deviations, map to velocities, PD, clamp, resolve joints, step the plant.
///
/// The loop keeps running while any |translation deviation| >= eps_translation
/// OR any |rotation deviation| >= eps_rotation; convergence is the simultaneous
/// negation of both. Requires `end-effector` and `pre-insert` frames in the
/// world tree; maintains `cable_tip` from the estimator.
pub fn alignment_loop(
    world: &mut WorldState,
    cfg: &AlignmentConfig,
    estimator: &mut dyn TipEstimator,
) -> AlignmentResult {
    let mut state = ControlState::new();
    let mut rows = Vec::new();
    let mut last_tip: Option<RigidTransform> = None;
    let mut stale_ticks = 0u32;
    let mut iteration = 0usize;
    let mut final_deviation = [f64::NAN; 6];

    loop {
        world.apply_due_disturbances();

        match estimator.estimate_tip(world) {
            Some(tip) => {
                last_tip = Some(tip);
                stale_ticks = 0;
            }
            None => stale_ticks += 1,
        }
        if stale_ticks > cfg.stale_limit {
            return AlignmentResult {
                outcome: AlignmentOutcome::PerceptionLost,
                iterations: iteration,
                rows,
                final_deviation,
            };
        }
        let Some(tip) = last_tip else {
            // No estimate yet at all: hold position and wait for the sensor.
            if iteration >= cfg.max_iters {
                return AlignmentResult {
                    outcome: AlignmentOutcome::PerceptionLost,
                    iterations: iteration,
                    rows,
                    final_deviation,
                };
            }
            world.step_plant(&Twist::ZERO, cfg.gains.period);
            iteration += 1;
            continue;
        };
        world
            .tree
            .insert(FRAME_CABLE_TIP, crate::frames::WORLD, tip)
            .expect("world frame always present");

        // Exit deviations: the cable-tip pose expressed in the pre-insert frame.
        let tip_in_pre = world
            .tree
            .relative(FRAME_CABLE_TIP, FRAME_PRE_INSERT)
            .expect("pre-insert frame must exist before alignment");
        let dev_exit = pose_deviation(&tip_in_pre, &RigidTransform::identity());
        final_deviation = dev_exit.to_array();

        let done = dev_exit.max_translation() < cfg.thresholds.eps_translation
            && dev_exit.max_rotation() < cfg.thresholds.eps_rotation;
        if done || iteration >= cfg.max_iters {
            rows.push(AlignmentRow {
                iteration,
                time: world.sim_time,
                deviation: dev_exit.to_array(),
                twist: [0.0; 6],
                joint_velocities: [0.0; 6],
                converged: done,
                clamped: false,
                ee_pose: world.end_effector_pose().to_array(),
                tip_pose: tip.to_array(),
            });
            return AlignmentResult {
                outcome: if done { AlignmentOutcome::Converged } else { AlignmentOutcome::MaxIterations },
                iterations: iteration,
                rows,
                final_deviation,
            };
        }

        // Deviations in the end-effector frame: pre-insert minus cable-tip.
        let pre_in_ee = world.tree.relative(FRAME_PRE_INSERT, FRAME_END_EFFECTOR).unwrap();
        let tip_in_ee = world.tree.relative(FRAME_CABLE_TIP, FRAME_END_EFFECTOR).unwrap();
        let dev = pose_deviation(&pre_in_ee, &tip_in_ee);

        let error_twist =
            twist_from_deviation(&dev, cfg.execution_time).expect("execution_time validated > 0");
        let cmd = pd_control(&error_twist.to_vector(), &mut state, &cfg.gains);
        let cmd = Twist::from_vector(&cmd);
        let clamped_cmd = clamp_twist(&cmd, &cfg.limits);
        let was_clamped = clamped_cmd != cmd;
        let qdot = resolve_joints(&clamped_cmd, &world.jacobian);
        let applied = Twist::from_vector(&(world.jacobian * qdot));

        rows.push(AlignmentRow {
            iteration,
            time: world.sim_time,
            deviation: dev_exit.to_array(),
            twist: clamped_cmd.to_array(),
            joint_velocities: qdot.into(),
            converged: false,
            clamped: was_clamped,
            ee_pose: world.end_effector_pose().to_array(),
            tip_pose: tip.to_array(),
        });

        world.step_plant(&applied, cfg.gains.period);
        iteration += 1;
    }
}

/// Write rows in the trace schema: iteration, sim time, six deviations, six
/// twist commands, six joint velocities, converged flag.
pub fn write_alignment_csv(w: &mut impl Write, rows: &[AlignmentRow]) -> io::Result<()> {
    writeln!(
        w,
        "iteration,time,dev_x,dev_y,dev_z,dev_roll,dev_pitch,dev_yaw,\
         twist_vx,twist_vy,twist_vz,twist_wx,twist_wy,twist_wz,\
         qd_1,qd_2,qd_3,qd_4,qd_5,qd_6,converged"
    )?;
    for r in rows {
        write!(w, "{},{:?}", r.iteration, r.time)?;
        for v in r.deviation.iter().chain(r.twist.iter()).chain(r.joint_velocities.iter()) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w, ",{}", r.converged)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Rpy;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deviation_of_identical_transforms_is_zero() {
        let t = RigidTransform::new(Vec3::new(0.2, -0.4, 1.0), Rpy::new(0.3, -0.7, 2.9));
        let d = pose_deviation(&t, &t);
        assert_eq!(d.to_vector(), Vector6::zeros());
    }

    #[test]
    fn deviation_direct_subtraction() {
        let a = RigidTransform::from_translation(1.0, 0.0, 0.0);
        let b = RigidTransform::identity();
        let d = pose_deviation(&a, &b);
        assert_relative_eq!(d.translation, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(d.rotation, Vec3::zeros());
    }

    #[test]
    fn deviation_takes_shortest_angle() {
        let a = RigidTransform::new(Vec3::zeros(), Rpy::new(0.0, 0.0, 3.1));
        let b = RigidTransform::new(Vec3::zeros(), Rpy::new(0.0, 0.0, -3.1));
        let d = pose_deviation(&a, &b);
        assert_relative_eq!(d.rotation.z, 6.2 - 2.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn twist_zero_deviation_and_identity_rate_matrix() {
        let zero = PoseDeviation { translation: Vec3::zeros(), rotation: Vec3::zeros() };
        let t = twist_from_deviation(&zero, 0.5).unwrap();
        assert!(t.is_zero());
        assert_eq!(angular_rate_matrix(0.0, 0.0), Matrix3::identity());

        let d = PoseDeviation { translation: Vec3::zeros(), rotation: Vec3::new(0.0, 0.0, 0.4) };
        let t = twist_from_deviation(&d, 2.0).unwrap();
        assert_relative_eq!(t.angular, Vec3::new(0.0, 0.0, 0.2), epsilon = 1e-12);
    }

    #[test]
    fn twist_rejects_nonpositive_dt() {
        let zero = PoseDeviation { translation: Vec3::zeros(), rotation: Vec3::zeros() };
        assert!(matches!(twist_from_deviation(&zero, 0.0), Err(ControlError::InvalidPeriod(_))));
    }

    #[test]
    fn rate_matrix_determinant_is_cos_pitch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-1.0..1.0);
            assert_relative_eq!(angular_rate_matrix(a, b).determinant(), b.cos(), epsilon = 1e-12);
        }
    }

    /// Finite-difference oracle: the rotation-vector (log map) of the rpy
    /// deviation treated as a rotation from identity.
    fn log_map_oracle(rotation: Vec3) -> Vec3 {
        let m = crate::frames::rpy_to_matrix(Rpy::new(rotation.x, rotation.y, rotation.z));
        let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let theta = cos_theta.acos();
        if theta < 1e-12 {
            return Vec3::new(
                (m[(2, 1)] - m[(1, 2)]) / 2.0,
                (m[(0, 2)] - m[(2, 0)]) / 2.0,
                (m[(1, 0)] - m[(0, 1)]) / 2.0,
            );
        }
        let s = theta / (2.0 * theta.sin());
        Vec3::new(
            (m[(2, 1)] - m[(1, 2)]) * s,
            (m[(0, 2)] - m[(2, 0)]) * s,
            (m[(1, 0)] - m[(0, 1)]) * s,
        )
    }

    #[test]
    fn small_deviation_twist_matches_log_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let rot = Vec3::new(
                rng.random_range(-1e-3..1e-3),
                rng.random_range(-1e-3..1e-3),
                rng.random_range(-1e-3..1e-3),
            );
            let d = PoseDeviation { translation: Vec3::zeros(), rotation: rot };
            let t = twist_from_deviation(&d, 1.0).unwrap();
            let oracle = log_map_oracle(rot);
            assert!((t.angular - oracle).norm() < 1e-6, "err {}", (t.angular - oracle).norm());
        }
    }

    #[test]
    fn pd_first_call_has_zero_derivative() {
        let gains = ControllerGains { kp: 2.0, kd: 0.2, period: 1.0 / 30.0 };
        let mut state = ControlState::new();
        let e = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let out = pd_control(&e, &mut state, &gains);
        assert_relative_eq!(out, Vector6::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn pd_constant_error_two_step_trace() {
        let gains = ControllerGains { kp: 2.0, kd: 0.2, period: 1.0 / 30.0 };
        let mut state = ControlState::new();
        let e = Vector6::new(0.3, -0.1, 0.0, 0.05, 0.0, -0.2);
        let _ = pd_control(&e, &mut state, &gains);
        let second = pd_control(&e, &mut state, &gains);
        assert_relative_eq!(second, e * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pd_zero_error_gives_zero() {
        let gains = ControllerGains::default();
        let mut state = ControlState::new();
        let out = pd_control(&Vector6::zeros(), &mut state, &gains);
        assert_eq!(out, Vector6::zeros());
        let out = pd_control(&Vector6::zeros(), &mut state, &gains);
        assert_eq!(out, Vector6::zeros());
    }

    #[test]
    fn clamp_scales_by_norm() {
        let lim = TwistLimits::default();
        let within = Twist { linear: Vec3::new(0.5, 0.0, 0.0), angular: Vec3::new(0.0, 0.1, 0.0) };
        assert_eq!(clamp_twist(&within, &lim), within);

        let over = Twist { linear: Vec3::new(3.0, 0.0, 0.0), angular: Vec3::zeros() };
        let c = clamp_twist(&over, &lim);
        assert_relative_eq!(c.linear, Vec3::new(1.5, 0.0, 0.0), epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let t = Twist {
                linear: Vec3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ),
                angular: Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ),
            };
            let c = clamp_twist(&t, &lim);
            assert!(c.linear.norm() <= lim.max_linear + 1e-9);
            assert!(c.angular.norm() <= lim.max_angular + 1e-9);
            if t.linear.norm() > 1e-9 {
                let cos = c.linear.dot(&t.linear) / (c.linear.norm() * t.linear.norm());
                assert_relative_eq!(cos, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn resolve_joints_identity_and_scaled() {
        let t = Twist { linear: Vec3::new(0.4, -0.2, 0.1), angular: Vec3::new(0.0, 0.3, -0.1) };
        let qd = resolve_joints(&t, &Matrix6::identity());
        assert_relative_eq!(qd, t.to_vector(), epsilon = 1e-12);

        let qd = resolve_joints(&t, &(Matrix6::identity() * 2.0));
        assert_relative_eq!(qd, t.to_vector() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn resolve_joints_residual_on_random_well_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            // Identity plus a small random perturbation stays well conditioned.
            let mut j = Matrix6::identity();
            for r in 0..6 {
                for c in 0..6 {
                    j[(r, c)] += rng.random_range(-0.2..0.2);
                }
            }
            let t = Twist {
                linear: Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                angular: Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
            };
            let qd = resolve_joints(&t, &j);
            assert!((j * qd - t.to_vector()).norm() < 1e-9);
        }
    }

    #[test]
    fn alignment_already_within_thresholds_converges_in_zero_iterations() {
        let scenario = crate::scenario::Scenario::default();
        let mut world = crate::simworld::WorldState::from_scenario(&scenario, 0).unwrap();
        let pre = RigidTransform::new(Vec3::new(0.3, 0.1, 0.3), Rpy::new(0.0, 0.0, 1.2));
        world.tree.insert(FRAME_PRE_INSERT, crate::frames::WORLD, pre).unwrap();
        world.set_end_effector_pose(pre);
        let cfg = AlignmentConfig::default();
        let result = alignment_loop(&mut world, &cfg, &mut EndEffectorTip);
        assert!(result.converged());
        assert_eq!(result.iterations, 0);
    }

    #[test]
    fn alignment_with_zero_gain_never_converges() {
        let scenario = crate::scenario::Scenario::default();
        let mut world = crate::simworld::WorldState::from_scenario(&scenario, 0).unwrap();
        let pre = RigidTransform::new(Vec3::new(0.3, 0.1, 0.3), Rpy::new(0.0, 0.0, 1.2));
        world.tree.insert(FRAME_PRE_INSERT, crate::frames::WORLD, pre).unwrap();
        world.set_end_effector_pose(RigidTransform::new(
            pre.translation + Vec3::new(0.05, 0.0, 0.0),
            pre.rotation,
        ));
        let cfg = AlignmentConfig {
            gains: ControllerGains { kp: 0.0, kd: 0.0, period: 1.0 / 30.0 },
            max_iters: 50,
            ..AlignmentConfig::default()
        };
        let result = alignment_loop(&mut world, &cfg, &mut EndEffectorTip);
        assert_eq!(result.outcome, AlignmentOutcome::MaxIterations);
        assert_eq!(result.iterations, 50);
    }

    #[test]
    fn twist_map_is_linear_at_frozen_matrix_arguments() {
        // Linear part scales with the deviation; the angular map is the fixed
        // matrix applied to the rate vector, so it is linear in that vector.
        let d = PoseDeviation {
            translation: Vec3::new(0.2, -0.1, 0.05),
            rotation: Vec3::new(0.3, -0.2, 0.4),
        };
        let k = 3.7;
        let scaled = PoseDeviation { translation: d.translation * k, rotation: d.rotation };
        let t1 = twist_from_deviation(&d, 0.5).unwrap();
        let t2 = twist_from_deviation(&scaled, 0.5).unwrap();
        assert_relative_eq!(t2.linear, t1.linear * k, epsilon = 1e-12);
        assert_eq!(t2.angular, t1.angular);

        let e = angular_rate_matrix(d.rotation.x, d.rotation.y);
        let v = d.rotation;
        assert_relative_eq!(e * (v * k), (e * v) * k, epsilon = 1e-12);
    }

    #[test]
    fn resolve_joints_damped_near_singularity() {
        let mut j = Matrix6::identity();
        j[(5, 5)] = 1e-6; // nearly rank deficient
        let t = Twist { linear: Vec3::new(0.0, 0.0, 0.0), angular: Vec3::new(0.0, 0.0, 1.0) };
        let qd = resolve_joints(&t, &j);
        assert!(qd.iter().all(|v| v.is_finite()));
        // Damping bounds the response: |qd| << 1/1e-6.
        assert!(qd.norm() < 1e4);
    }
}
