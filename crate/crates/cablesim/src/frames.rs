//! Rigid-transform algebra shared by every other module.
//!
//! The rotation convention used throughout the crate is fixed here, once:
//! roll-pitch-yaw as **extrinsic X-Y-Z**, i.e. a rotation by `roll` about the
//! fixed x axis, then `pitch` about the fixed y axis, then `yaw` about the
//! fixed z axis:
//!
//! ```text
//! R = Rz(yaw) * Ry(pitch) * Rx(roll)
//! ```
//!
//! Every pose serialized by this crate is the 6-vector
//! `[x, y, z, roll, pitch, yaw]` (meters, radians) under that convention.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

/// A 3-D point or direction in meters (or unit-free where noted).
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("unknown frame {0:?}")]
    UnknownFrame(String),
    #[error("inserting frame {0:?} under {1:?} would create a cycle")]
    CyclicFrame(String, String),
    #[error("frame {0:?} may not be its own parent")]
    SelfParent(String),
}

/// Wrap an angle to the canonical range `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Roll-pitch-yaw angles in radians (extrinsic X-Y-Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rpy {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Rpy {
    pub const ZERO: Rpy = Rpy { roll: 0.0, pitch: 0.0, yaw: 0.0 };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rpy { roll, pitch, yaw }
    }

    /// Each component wrapped to `(-pi, pi]`.
    pub fn normalized(self) -> Self {
        Rpy {
            roll: normalize_angle(self.roll),
            pitch: normalize_angle(self.pitch),
            yaw: normalize_angle(self.yaw),
        }
    }

    pub fn to_matrix(self) -> Matrix3<f64> {
        rpy_to_matrix(self)
    }

    pub fn is_finite(self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }
}

/// Rotation matrix for the crate-wide convention `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rpy_to_matrix(r: Rpy) -> Matrix3<f64> {
    let (sa, ca) = r.roll.sin_cos();
    let (sb, cb) = r.pitch.sin_cos();
    let (sg, cg) = r.yaw.sin_cos();
    Matrix3::new(
        cg * cb,
        cg * sb * sa - sg * ca,
        cg * sb * ca + sg * sa,
        sg * cb,
        sg * sb * sa + cg * ca,
        sg * sb * ca - cg * sa,
        -sb,
        cb * sa,
        cb * ca,
    )
}

/// Recover roll-pitch-yaw from an orthonormal rotation matrix.
///
/// Returns the angles plus a flag that is true when the decomposition is
/// gimbal-degenerate (`|pitch| = pi/2`); in that case roll and yaw are not
/// individually observable and yaw is forced to 0.
pub fn matrix_to_rpy(m: &Matrix3<f64>) -> (Rpy, bool) {
    // cos(pitch) recovered from the first column / last row pair.
    let cb = (m[(0, 0)] * m[(0, 0)] + m[(1, 0)] * m[(1, 0)]).sqrt();
    if cb < 1e-9 {
        // Gimbal: pitch = +/- pi/2, only roll -/+ yaw observable. Force yaw = 0.
        let pitch = if m[(2, 0)] <= 0.0 { PI / 2.0 } else { -PI / 2.0 };
        let sb = -m[(2, 0)].clamp(-1.0, 1.0);
        let roll = (sb * m[(0, 1)]).atan2(sb * m[(0, 2)]);
        return (Rpy::new(roll, pitch, 0.0), true);
    }
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    (Rpy::new(roll, pitch, yaw), false)
}

/// Pose of one frame expressed in another: translation in meters plus
/// roll-pitch-yaw in radians.
///
/// Serializes as the flat 6-vector `[x, y, z, roll, pitch, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub translation: Vec3,
    pub rotation: Rpy,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { translation: Vec3::zeros(), rotation: Rpy::ZERO }
    }

    pub fn new(translation: Vec3, rotation: Rpy) -> Self {
        RigidTransform { translation, rotation: rotation.normalized() }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        RigidTransform { translation: Vec3::new(x, y, z), rotation: Rpy::ZERO }
    }

    /// Build from a translation and an orthonormal rotation matrix.
    pub fn from_parts(translation: Vec3, rotation: &Matrix3<f64>) -> Self {
        let (rpy, _) = matrix_to_rpy(rotation);
        RigidTransform { translation, rotation: rpy }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rpy_to_matrix(self.rotation)
    }

    /// 4x4 homogeneous form.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }

    /// Map a point through this transform.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.translation
    }

    /// Rotate a direction (no translation).
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation_matrix() * v
    }

    /// Unit x axis of the frame, expressed in the parent frame.
    pub fn x_axis(&self) -> Vec3 {
        self.rotation_matrix().column(0).into()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        RigidTransform::from_parts(-(rt * self.translation), &rt)
    }

    /// `self` applied after `other`: the result maps a point through `other`
    /// then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let r = self.rotation_matrix() * other.rotation_matrix();
        let t = self.rotation_matrix() * other.translation + self.translation;
        RigidTransform::from_parts(t, &r)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.roll,
            self.rotation.pitch,
            self.rotation.yaw,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        RigidTransform {
            translation: Vec3::new(a[0], a[1], a[2]),
            rotation: Rpy::new(a[3], a[4], a[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.rotation.is_finite()
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let a = <[f64; 6]>::deserialize(deserializer)?;
        if !a.iter().all(|v| v.is_finite()) {
            return Err(D::Error::custom("pose components must be finite"));
        }
        Ok(RigidTransform::from_array(a))
    }
}

/// Complete a right-handed orthonormal frame from an origin and a unit x axis.
///
/// The z axis is the projection of world-z out of the x axis, and y = z cross x,
/// so the rotation about x is zero by construction (gravity-consistent
/// completion). When the x axis is parallel to world-z within 1e-6 the world-y
/// axis is used for the completion instead; the returned flag reports that
/// fallback.
pub fn frame_from_x_axis(origin: Vec3, x_axis: Vec3) -> (RigidTransform, bool) {
    let x = x_axis.normalize();
    let world_z = Vec3::z();
    let mut z = world_z - x * world_z.dot(&x);
    let mut fallback = false;
    if z.norm() < 1e-6 {
        fallback = true;
        let world_y = Vec3::y();
        z = world_y - x * world_y.dot(&x);
    }
    let z = z.normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    (RigidTransform::from_parts(origin, &m), fallback)
}

/// A tree of named frames, each posed relative to a parent. The root frame is
/// `"world"` and always exists.
#[derive(Debug, Clone)]
pub struct FrameTree {
    // BTreeMap keeps iteration deterministic.
    frames: BTreeMap<String, (String, RigidTransform)>,
}

pub const WORLD: &str = "world";

impl Default for FrameTree {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameTree {
    pub fn new() -> Self {
        FrameTree { frames: BTreeMap::new() }
    }

    pub fn contains(&self, name: &str) -> bool {
        name == WORLD || self.frames.contains_key(name)
    }

    /// Insert or update `name` with the given pose relative to `parent`.
    pub fn insert(
        &mut self,
        name: &str,
        parent: &str,
        pose: RigidTransform,
    ) -> Result<(), FrameError> {
        if name == parent || name == WORLD {
            return Err(FrameError::SelfParent(name.to_string()));
        }
        if !self.contains(parent) {
            return Err(FrameError::UnknownFrame(parent.to_string()));
        }
        // Re-parenting under one of our own descendants would close a loop.
        let mut cursor = parent.to_string();
        while cursor != WORLD {
            if cursor == name {
                return Err(FrameError::CyclicFrame(name.to_string(), parent.to_string()));
            }
            cursor = self.frames[&cursor].0.clone();
        }
        self.frames.insert(name.to_string(), (parent.to_string(), pose));
        Ok(())
    }

    /// Pose of `name` in the world frame.
    pub fn world_pose(&self, name: &str) -> Result<RigidTransform, FrameError> {
        if name == WORLD {
            return Ok(RigidTransform::identity());
        }
        let mut pose = RigidTransform::identity();
        let mut cursor = name;
        loop {
            let (parent, local) = self
                .frames
                .get(cursor)
                .ok_or_else(|| FrameError::UnknownFrame(cursor.to_string()))?;
            pose = local.compose(&pose);
            if parent == WORLD {
                return Ok(pose);
            }
            cursor = parent;
        }
    }

    /// Transform of `from` expressed in `to`.
    pub fn relative(&self, from: &str, to: &str) -> Result<RigidTransform, FrameError> {
        let world_from = self.world_pose(from)?;
        let world_to = self.world_pose(to)?;
        Ok(world_to.inverse().compose(&world_from))
    }

    pub fn frame_names(&self) -> impl Iterator<Item = &str> {
        self.frames.keys().map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn compose_identity_cases() {
        let id = RigidTransform::identity();
        assert_eq!(id.compose(&id), id);

        let t = RigidTransform::new(Vec3::new(0.3, -1.2, 0.8), Rpy::new(0.4, -0.2, 1.1));
        let round = t.compose(&t.inverse());
        assert!(max_abs_diff(&round.to_homogeneous(), &Matrix4::identity()) < 1e-9);
    }

    #[test]
    fn compose_pure_translations_add() {
        let a = RigidTransform::from_translation(1.0, 0.0, 0.0);
        let b = RigidTransform::from_translation(0.0, 2.0, 0.0);
        let c = a.compose(&b);
        assert_relative_eq!(c.translation, Vec3::new(1.0, 2.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rpy_identity_and_axis_permutation() {
        assert_relative_eq!(rpy_to_matrix(Rpy::ZERO), Matrix3::identity(), epsilon = 1e-15);

        // 90 degree yaw maps x->y and y->-x.
        let m = rpy_to_matrix(Rpy::new(0.0, 0.0, PI / 2.0));
        assert_relative_eq!(m * Vec3::x(), Vec3::y(), epsilon = 1e-12);
        assert_relative_eq!(m * Vec3::y(), -Vec3::x(), epsilon = 1e-12);
        assert_relative_eq!(m * Vec3::z(), Vec3::z(), epsilon = 1e-12);
    }

    #[test]
    fn rpy_round_trip_1000_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let r = Rpy::new(
                rng.random_range(-PI..PI),
                rng.random_range(-1.55..1.55),
                rng.random_range(-PI..PI),
            );
            let (back, gimbal) = matrix_to_rpy(&rpy_to_matrix(r));
            assert!(!gimbal);
            let n = r.normalized();
            worst = worst
                .max((back.roll - n.roll).abs())
                .max((back.pitch - n.pitch).abs())
                .max((back.yaw - n.yaw).abs());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst}");
    }

    #[test]
    fn gimbal_degenerate_flags_and_forces_zero_yaw() {
        let r = Rpy::new(0.3, PI / 2.0, 0.7);
        let m = rpy_to_matrix(r);
        let (back, gimbal) = matrix_to_rpy(&m);
        assert!(gimbal);
        assert_eq!(back.yaw, 0.0);
        // The decomposition still reproduces the same rotation.
        assert!((rpy_to_matrix(back) - m).norm() < 1e-9);
    }

    #[test]
    fn normalize_angle_range() {
        assert_relative_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(normalize_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(normalize_angle(0.1 - 4.0 * PI), 0.1, epsilon = 1e-12);
        assert_eq!(normalize_angle(PI), PI);
    }

    #[test]
    fn tree_same_frame_is_identity() {
        let tree = FrameTree::new();
        let t = tree.relative(WORLD, WORLD).unwrap();
        assert_eq!(t, RigidTransform::identity());
    }

    #[test]
    fn tree_single_edge() {
        let mut tree = FrameTree::new();
        tree.insert("a", WORLD, RigidTransform::from_translation(0.0, 1.0, 0.0)).unwrap();
        let t = tree.relative("a", WORLD).unwrap();
        assert_relative_eq!(t.translation, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn tree_chain_matches_matrix_product_oracle() {
        let mut tree = FrameTree::new();
        let ta = RigidTransform::new(Vec3::new(0.2, -0.1, 0.5), Rpy::new(0.3, 0.2, -0.4));
        let tb = RigidTransform::new(Vec3::new(-0.7, 0.4, 0.1), Rpy::new(-0.1, 0.5, 0.9));
        tree.insert("a", WORLD, ta).unwrap();
        tree.insert("b", "a", tb).unwrap();

        let got = tree.relative("b", WORLD).unwrap().to_homogeneous();
        let want = ta.to_homogeneous() * tb.to_homogeneous();
        assert!(max_abs_diff(&got, &want) < 1e-9);

        // And the reverse direction is the matrix inverse.
        let got_rev = tree.relative(WORLD, "b").unwrap().to_homogeneous();
        let want_rev = want.try_inverse().unwrap();
        assert!(max_abs_diff(&got_rev, &want_rev) < 1e-9);
    }

    #[test]
    fn tree_unknown_frame_errors() {
        let tree = FrameTree::new();
        assert_eq!(
            tree.relative("nope", WORLD),
            Err(FrameError::UnknownFrame("nope".to_string()))
        );
    }

    #[test]
    fn tree_rejects_cycles() {
        let mut tree = FrameTree::new();
        tree.insert("a", WORLD, RigidTransform::identity()).unwrap();
        tree.insert("b", "a", RigidTransform::identity()).unwrap();
        let err = tree.insert("a", "b", RigidTransform::identity()).unwrap_err();
        assert!(matches!(err, FrameError::CyclicFrame(_, _)));
    }

    #[test]
    fn transform_serializes_as_six_reals() {
        let t = RigidTransform::new(Vec3::new(0.1, -0.2, 0.3), Rpy::new(0.4, -0.5, 0.6));
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "[0.1,-0.2,0.3,0.4,-0.5,0.6]");
        let back: RigidTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<RigidTransform>("[1,2,3]").is_err());
        assert!(serde_json::from_str::<RigidTransform>("[1,2,3,4,5,null]").is_err());
    }

    #[test]
    fn frame_from_x_axis_cases() {
        let (f, fb) = frame_from_x_axis(Vec3::zeros(), Vec3::x());
        assert!(!fb);
        assert!(max_abs_diff(&f.to_homogeneous(), &Matrix4::identity()) < 1e-9);

        let (f, fb) = frame_from_x_axis(Vec3::zeros(), Vec3::y());
        assert!(!fb);
        let m = f.rotation_matrix();
        assert_relative_eq!(Vec3::from(m.column(0)), Vec3::y(), epsilon = 1e-12);
        assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-9);

        // Parallel to world-z triggers the y fallback.
        let (_, fb) = frame_from_x_axis(Vec3::zeros(), Vec3::z());
        assert!(fb);
    }

    fn arb_rpy() -> impl Strategy<Value = Rpy> {
        (-PI..PI, -1.5f64..1.5, -PI..PI).prop_map(|(r, p, y)| Rpy::new(r, p, y))
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (arb_rpy(), -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)
            .prop_map(|(r, x, y, z)| RigidTransform::new(Vec3::new(x, y, z), r))
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let left = a.compose(&b).compose(&c).to_homogeneous();
            let right = a.compose(&b.compose(&c)).to_homogeneous();
            prop_assert!(max_abs_diff(&left, &right) < 1e-9);
        }

        #[test]
        fn double_inverse_is_identity(t in arb_transform()) {
            let back = t.inverse().inverse();
            prop_assert!(max_abs_diff(&back.to_homogeneous(), &t.to_homogeneous()) < 1e-9);
        }

        #[test]
        fn rotation_matrices_are_orthonormal(r in arb_rpy()) {
            let m = rpy_to_matrix(r);
            prop_assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
