//! Socket pose estimation and point-cloud reduction.
//!
//! The pipeline stages here mirror a depth-camera front end: circle detection
//! on the intensity channel locates the socket hole, back-projection lifts it
//! to 3-D, RANSAC on the wall cloud gives the hole-plane normal, and the
//! pass-through / bounding-box / center-pixel steps reduce the scene cloud to
//! the cable points used by the model fit. Object detection is replaced by a
//! ground-truth bounding-box oracle fed by the scene generator.

use crate::cloud::PointCloud;
use crate::frames::{frame_from_x_axis, RigidTransform, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("no circle found above the accumulator acceptance score")]
    CircleNotFound,
    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("plane fit needs at least 3 non-collinear points ({0})")]
    DegenerateCloud(String),
    #[error("pixel set is empty")]
    EmptyPixelSet,
    #[error("no pixel with valid depth near the median pixel")]
    NoValidDepth,
    #[error("object is not visible from the camera")]
    NotVisible,
    #[error("pass-through bounds have min > max on axis {0}")]
    InvalidBounds(usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad depth image header: {0}")]
    BadHeader(String),
}

/// Pinhole camera: focal length and principal point in pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, PerceptionError> {
        if !(f > 0.0) {
            return Err(PerceptionError::InvalidIntrinsics(format!("f = {f} must be > 0")));
        }
        if !(0.0 <= cx && cx < width as f64) || !(0.0 <= cy && cy < height as f64) {
            return Err(PerceptionError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(CameraIntrinsics { f, cx, cy, width, height })
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        Self::new(self.f, self.cx, self.cy, self.width, self.height).map(|_| ())
    }

    pub fn contains_pixel(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }
}

/// Lift a pixel plus depth to a camera-frame point (x right, y down, z forward):
/// `X = (x - cx) Z / f`, `Y = (y - cy) Z / f`, `Z = depth`.
pub fn back_project(
    pixel: (f64, f64),
    depth: f64,
    cam: &CameraIntrinsics,
) -> Result<Vec3, PerceptionError> {
    if !(depth > 0.0) {
        return Err(PerceptionError::InvalidDepth(depth));
    }
    Ok(Vec3::new(
        (pixel.0 - cam.cx) * depth / cam.f,
        (pixel.1 - cam.cy) * depth / cam.f,
        depth,
    ))
}

/// Perspective projection of a camera-frame point, the inverse of [`back_project`].
pub fn project(p: &Vec3, cam: &CameraIntrinsics) -> Result<(f64, f64), PerceptionError> {
    if !(p.z > 0.0) {
        return Err(PerceptionError::BehindCamera(p.z));
    }
    Ok((cam.f * p.x / p.z + cam.cx, cam.f * p.y / p.z + cam.cy))
}

/// Depth grid in meters (0 = no return) with a paired intensity grid used for
/// circle and mask detection.
#[derive(Debug, Clone)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        DepthImage { width, height, depth: vec![0.0; n], intensity: vec![0.0; n] }
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[self.idx(x, y)]
    }

    pub fn intensity_at(&self, x: u32, y: u32) -> f64 {
        self.intensity[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, depth: f64, intensity: f64) {
        let i = self.idx(x, y);
        self.depth[i] = depth;
        self.intensity[i] = intensity;
    }

    /// Pixels whose intensity is at least `threshold`, ordered top-to-bottom
    /// then left-to-right (row-major scan order).
    pub fn mask_pixels(&self, threshold: f64) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.intensity_at(x, y) >= threshold {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Binary file form: a one-line JSON header `{width, height, intrinsics}`
    /// followed by the depth grid then the intensity grid as little-endian f64.
    pub fn write(&self, w: &mut impl Write, cam: &CameraIntrinsics) -> Result<(), PerceptionError> {
        let header = serde_json::json!({
            "width": self.width,
            "height": self.height,
            "intrinsics": cam,
        });
        writeln!(w, "{header}")?;
        for v in self.depth.iter().chain(self.intensity.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<(Self, CameraIntrinsics), PerceptionError> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 4096 {
                return Err(PerceptionError::BadHeader("header longer than 4096 bytes".into()));
            }
        }
        #[derive(Deserialize)]
        struct Header {
            width: u32,
            height: u32,
            intrinsics: CameraIntrinsics,
        }
        let h: Header = serde_json::from_slice(&header)
            .map_err(|e| PerceptionError::BadHeader(e.to_string()))?;
        h.intrinsics.validate()?;
        let n = (h.width * h.height) as usize;
        let mut grids = vec![0.0f64; 2 * n];
        let mut buf = [0u8; 8];
        for v in grids.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        let intensity = grids.split_off(n);
        Ok((DepthImage { width: h.width, height: h.height, depth: grids, intensity }, h.intrinsics))
    }

    pub fn save(&self, path: &Path, cam: &CameraIntrinsics) -> Result<(), PerceptionError> {
        let mut f = std::fs::File::create(path)?;
        self.write(&mut f, cam)
    }

    pub fn load(path: &Path) -> Result<(Self, CameraIntrinsics), PerceptionError> {
        let mut f = std::fs::File::open(path)?;
        Self::read(&mut f)
    }
}

/// Tuning for the voting circle detector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CircleDetectConfig {
    /// Radius search range in pixels, inclusive.
    pub r_min: u32,
    pub r_max: u32,
    /// Gradient magnitude below which a pixel casts no votes.
    pub edge_threshold: f64,
    /// Fraction of the perfect-circle score (2*pi*r votes near the peak)
    /// required to accept a detection.
    pub accept_score: f64,
}

impl Default for CircleDetectConfig {
    fn default() -> Self {
        CircleDetectConfig { r_min: 5, r_max: 40, edge_threshold: 0.8, accept_score: 0.6 }
    }
}

/// Detected circle: sub-pixel center and radius, plus the normalized
/// accumulator score that accepted it.
#[derive(Debug, Clone, Copy)]
pub struct CircleDetection {
    pub center: (f64, f64),
    pub radius: f64,
    pub score: f64,
}

/// Gradient-guided voting circle detector over the intensity grid.
///
/// Each strong-gradient pixel votes for circle centers at every radius in the
/// configured range, along both gradient directions. The best accumulator cell
/// wins; the reported center and radius are vote-weighted averages over the
/// cell's 3x3x3 neighborhood. The score is the neighborhood vote mass in the
/// winning radius plane divided by the winning circle's circumference in
/// pixels, so a clean full circle scores near 1.
pub fn detect_circle(
    img: &DepthImage,
    cfg: &CircleDetectConfig,
) -> Result<CircleDetection, PerceptionError> {
    let (w, h) = (img.width as i64, img.height as i64);
    if w < 3 || h < 3 {
        return Err(PerceptionError::CircleNotFound);
    }
    let at = |x: i64, y: i64| img.intensity[(y * w + x) as usize];

    // Sobel gradients, edge pixels only.
    let mut edges: Vec<(i64, i64, f64, f64)> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag >= cfg.edge_threshold {
                edges.push((x, y, gx / mag, gy / mag));
            }
        }
    }
    if edges.is_empty() {
        return Err(PerceptionError::CircleNotFound);
    }

    let n_radii = (cfg.r_max - cfg.r_min + 1) as usize;
    let plane = (w * h) as usize;
    let mut acc = vec![0u32; n_radii * plane];
    for &(x, y, nx, ny) in &edges {
        for ri in 0..n_radii {
            let r = (cfg.r_min as usize + ri) as f64;
            for sign in [-1.0, 1.0] {
                let cx = (x as f64 + sign * r * nx).round() as i64;
                let cy = (y as f64 + sign * r * ny).round() as i64;
                if cx >= 0 && cx < w && cy >= 0 && cy < h {
                    acc[ri * plane + (cy * w + cx) as usize] += 1;
                }
            }
        }
    }

    let (mut best, mut best_votes) = (0usize, 0u32);
    for (i, &v) in acc.iter().enumerate() {
        if v > best_votes {
            best = i;
            best_votes = v;
        }
    }
    if best_votes == 0 {
        return Err(PerceptionError::CircleNotFound);
    }
    let (ri, rem) = (best / plane, best % plane);
    let (py, px) = (rem as i64 / w, rem as i64 % w);

    // Vote-weighted centroid over the 3x3x3 neighborhood.
    let mut sum = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sr = 0.0;
    let mut plane_sum = 0.0;
    for dri in -1i64..=1 {
        let r = ri as i64 + dri;
        if r < 0 || r >= n_radii as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (px + dx, py + dy);
                if x < 0 || x >= w || y < 0 || y >= h {
                    continue;
                }
                let v = acc[r as usize * plane + (y * w + x) as usize] as f64;
                sum += v;
                sx += v * x as f64;
                sy += v * y as f64;
                sr += v * (cfg.r_min as i64 + r) as f64;
                if dri == 0 {
                    plane_sum += v;
                }
            }
        }
    }
    let radius = sr / sum;
    let score = plane_sum / (2.0 * std::f64::consts::PI * radius);
    if score < cfg.accept_score {
        return Err(PerceptionError::CircleNotFound);
    }
    Ok(CircleDetection { center: (sx / sum, sy / sum), radius, score })
}

/// RANSAC plane estimate: unit normal, signed offset (`normal . p = offset`),
/// and the per-point inlier index set of the refit plane.
#[derive(Debug, Clone)]
pub struct PlaneFit {
    pub normal: Vec3,
    pub offset: f64,
    pub inliers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: u32,
    /// Point-to-plane inlier distance in meters.
    pub inlier_tolerance: f64,
    /// The normal is flipped to point toward this position (the sensor origin).
    pub viewpoint: Vec3,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig { iterations: 200, inlier_tolerance: 0.005, viewpoint: Vec3::zeros() }
    }
}

/// Sampled-consensus plane detection with a least-squares refit on the winning
/// inlier set.
pub fn ransac_plane(
    cloud: &PointCloud,
    cfg: &RansacConfig,
    rng: &mut impl Rng,
) -> Result<PlaneFit, PerceptionError> {
    let pts = &cloud.points;
    let n = pts.len();
    if n < 3 {
        return Err(PerceptionError::DegenerateCloud(format!("got {n} points")));
    }

    let mut best: Option<(usize, Vec3, f64)> = None; // (inlier count, normal, offset)
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let normal = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
        let norm = normal.norm();
        if norm < 1e-12 {
            continue;
        }
        let normal = normal / norm;
        let offset = normal.dot(&pts[i]);
        let count = pts.iter().filter(|p| (normal.dot(p) - offset).abs() <= cfg.inlier_tolerance).count();
        if best.as_ref().is_none_or(|(c, _, _)| count > *c) {
            best = Some((count, normal, offset));
        }
    }
    let (_, normal, offset) =
        best.ok_or_else(|| PerceptionError::DegenerateCloud("all samples collinear".into()))?;

    // Least-squares refit: plane through the inlier centroid, normal = the
    // smallest-variance principal direction.
    let inlier_idx: Vec<usize> = (0..n)
        .filter(|&i| (normal.dot(&pts[i]) - offset).abs() <= cfg.inlier_tolerance)
        .collect();
    let m = inlier_idx.len() as f64;
    let centroid = inlier_idx.iter().fold(Vec3::zeros(), |acc, &i| acc + pts[i]) / m;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for &i in &inlier_idx {
        let d = pts[i] - centroid;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let min_i = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut refit_normal: Vec3 = eig.eigenvectors.column(min_i).into();
    if refit_normal.norm() < 1e-12 {
        return Err(PerceptionError::DegenerateCloud("singular covariance".into()));
    }
    refit_normal.normalize_mut();
    if refit_normal.dot(&(cfg.viewpoint - centroid)) < 0.0 {
        refit_normal = -refit_normal;
    }
    let refit_offset = refit_normal.dot(&centroid);
    let inliers: Vec<usize> = (0..n)
        .filter(|&i| (refit_normal.dot(&pts[i]) - refit_offset).abs() <= cfg.inlier_tolerance)
        .collect();
    Ok(PlaneFit { normal: refit_normal, offset: refit_offset, inliers })
}

/// Socket pose estimate assembled from the circle detection and wall plane.
#[derive(Debug, Clone, Serialize)]
pub struct SocketEstimate {
    pub pixel_center: (f64, f64),
    /// Hole center in the world frame, meters.
    pub center: Vec3,
    /// Unit wall normal, pointing away from the wall toward the sensor.
    pub normal: Vec3,
    pub frame: RigidTransform,
    /// True when the frame completion fell back to the world-y axis.
    pub completion_fallback: bool,
}

/// Build the socket frame: origin at the hole center, x axis along the wall
/// normal, rotation about x fixed to zero by the gravity-consistent completion.
pub fn socket_frame(center: Vec3, normal: Vec3) -> (RigidTransform, bool) {
    frame_from_x_axis(center, normal)
}

/// Per-axis closed intervals, each side optional.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PassThroughBounds {
    pub min: [Option<f64>; 3],
    pub max: [Option<f64>; 3],
}

impl PassThroughBounds {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        for axis in 0..3 {
            if let (Some(lo), Some(hi)) = (self.min[axis], self.max[axis]) {
                if lo > hi {
                    return Err(PerceptionError::InvalidBounds(axis));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        for axis in 0..3 {
            let v = p[axis];
            if let Some(lo) = self.min[axis] {
                if v < lo {
                    return false;
                }
            }
            if let Some(hi) = self.max[axis] {
                if v > hi {
                    return false;
                }
            }
        }
        true
    }
}

/// Keep exactly the points inside all bounded intervals, order preserved.
pub fn pass_through(cloud: &PointCloud, bounds: &PassThroughBounds) -> PointCloud {
    cloud.filter_by_index(|i| bounds.contains(&cloud.points[i]))
}

/// Axis-aligned pixel box, `max` inclusive and strictly greater than `min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox2D {
    pub min: (u32, u32),
    pub max: (u32, u32),
}

impl BoundingBox2D {
    pub fn contains(&self, px: (u32, u32)) -> bool {
        px.0 >= self.min.0 && px.0 <= self.max.0 && px.1 >= self.min.1 && px.1 <= self.max.1
    }
}

/// Result of [`object_center`]: the lifted center and whether the median pixel
/// had to borrow depth from a neighbor.
#[derive(Debug, Clone, Copy)]
pub struct ObjectCenter {
    pub center_camera: Vec3,
    pub pixel: (u32, u32),
    pub used_neighbor_depth: bool,
}

/// Back-project the median pixel of an ordered object pixel set.
///
/// `pixels` must be ordered top-to-bottom then left-to-right; the median is the
/// element at index `len / 2`. A zero depth at the median pixel falls back to
/// the nearest (by list index) pixel with valid depth, reported via the flag.
pub fn object_center(
    pixels: &[(u32, u32)],
    img: &DepthImage,
    cam: &CameraIntrinsics,
) -> Result<ObjectCenter, PerceptionError> {
    if pixels.is_empty() {
        return Err(PerceptionError::EmptyPixelSet);
    }
    let mid = pixels.len() / 2;
    let mut chosen = None;
    let mut used_neighbor = false;
    for step in 0..pixels.len() {
        for cand in [mid.checked_sub(step), mid.checked_add(step)].into_iter().flatten() {
            if cand < pixels.len() {
                let (x, y) = pixels[cand];
                if img.depth_at(x, y) > 0.0 {
                    chosen = Some(cand);
                    break;
                }
            }
        }
        if chosen.is_some() {
            used_neighbor = step > 0;
            break;
        }
    }
    let idx = chosen.ok_or(PerceptionError::NoValidDepth)?;
    let (x, y) = pixels[idx];
    let p = back_project((x as f64, y as f64), img.depth_at(x, y), cam)?;
    Ok(ObjectCenter { center_camera: p, pixel: (x, y), used_neighbor_depth: used_neighbor })
}

/// Ground-truth bounding box around the projected cable points, padded by
/// `margin` pixels and clipped to the image. Stands in for a learned object
/// detector: the scene generator knows exactly where the cable is.
///
/// `cable_points_world` is a dense polyline of ground-truth cable points and
/// `camera_pose` the camera frame in the world.
pub fn bbox_oracle(
    cable_points_world: &[Vec3],
    camera_pose: &RigidTransform,
    cam: &CameraIntrinsics,
    margin: u32,
) -> Result<BoundingBox2D, PerceptionError> {
    let world_to_cam = camera_pose.inverse();
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for p in cable_points_world {
        let pc = world_to_cam.transform_point(p);
        let Ok((px, py)) = project(&pc, cam) else { continue };
        if !cam.contains_pixel(px, py) {
            continue;
        }
        any = true;
        lo = (lo.0.min(px), lo.1.min(py));
        hi = (hi.0.max(px), hi.1.max(py));
    }
    if !any {
        return Err(PerceptionError::NotVisible);
    }
    let min_x = (lo.0.floor() as i64 - margin as i64).max(0) as u32;
    let min_y = (lo.1.floor() as i64 - margin as i64).max(0) as u32;
    let max_x = (hi.0.ceil() as u32 + margin).min(cam.width - 1);
    let max_y = (hi.1.ceil() as u32 + margin).min(cam.height - 1);
    if max_x <= min_x || max_y <= min_y {
        return Err(PerceptionError::NotVisible);
    }
    Ok(BoundingBox2D { min: (min_x, min_y), max: (max_x, max_y) })
}

/// Back-project every `stride`-th pixel with a depth return into a world-frame
/// cloud. Feeds the wall-plane RANSAC from a rendered socket view.
pub fn depth_to_cloud(
    img: &DepthImage,
    cam: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    stride: u32,
) -> PointCloud {
    let mut points = Vec::new();
    let stride = stride.max(1);
    let mut y = 0;
    while y < img.height {
        let mut x = 0;
        while x < img.width {
            let d = img.depth_at(x, y);
            if d > 0.0 {
                if let Ok(pc) = back_project((x as f64, y as f64), d, cam) {
                    points.push(camera_pose.transform_point(&pc));
                }
            }
            x += stride;
        }
        y += stride;
    }
    PointCloud::new(points)
}
