//! Dual-plane quadratic cable model.
//!
//! A filtered world-frame cloud is reduced to two 2-D curve fits,
//!
//! ```text
//! x = a0 + a1*y + a2*y^2
//! z = b0 + b1*y + b2*y^2
//! ```
//!
//! which together describe the cable as a curve parameterized by y. The curve
//! is resampled into a piecewise-linear chain `p_1..p_N` ordered from the tip
//! outward; chain arc lengths drive grasp-point selection, and the first
//! segment's tangent defines the cable-tip frame.

use crate::cloud::PointCloud;
use crate::frames::{frame_from_x_axis, RigidTransform, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("fold at the first bin leaves no single-valued segment")]
    DegenerateShape,
    #[error("quadratic fit needs >= 3 distinct parameter values, got {0}")]
    RankDeficient(usize),
    #[error("normal equations are singular")]
    SingularFit,
    #[error("chain needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("chain y coordinates must be strictly monotonic")]
    NonMonotonicChain,
    #[error("zero-length chain segment at index {0}")]
    ZeroLengthSegment(usize),
    #[error("first chain segment is too short to define a tangent")]
    DegenerateTangent,
    #[error("grasp spec must satisfy 0 < d_min < d_max, got [{0}, {1}]")]
    InvalidGraspSpec(f64, f64),
    #[error("no sample point with arc distance in [{0}, {1}]")]
    NoFeasibleGrasp(f64, f64),
}

/// Coefficients of the two per-plane quadratics. Units are meters when y is
/// meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
}

impl QuadCoeffs {
    pub fn new(a: (f64, f64, f64), b: (f64, f64, f64)) -> Self {
        QuadCoeffs { a0: a.0, a1: a.1, a2: a.2, b0: b.0, b1: b.1, b2: b.2 }
    }

    pub fn x_at(&self, y: f64) -> f64 {
        self.a0 + self.a1 * y + self.a2 * y * y
    }

    pub fn z_at(&self, y: f64) -> f64 {
        self.b0 + self.b1 * y + self.b2 * y * y
    }

    pub fn point_at(&self, y: f64) -> Vec3 {
        Vec3::new(self.x_at(y), y, self.z_at(y))
    }

    /// Curve tangent d(x,y,z)/dy, not normalized.
    pub fn tangent_at(&self, y: f64) -> Vec3 {
        Vec3::new(self.a1 + 2.0 * self.a2 * y, 1.0, self.b1 + 2.0 * self.b2 * y)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a0, self.a1, self.a2, self.b0, self.b1, self.b2]
    }
}

/// Which end of the y range is the cable tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TipEnd {
    MinY,
    MaxY,
}

/// Piecewise-linear chain ordered from the tip (`p_1`) outward.
#[derive(Debug, Clone, Serialize)]
pub struct SampledCable {
    points: Vec<Vec3>,
    segments: Vec<f64>,
}

impl SampledCable {
    /// Validates N >= 2, strictly monotonic y, and nonzero segment lengths.
    pub fn new(points: Vec<Vec3>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::TooFewSamples(points.len()));
        }
        let increasing = points[1].y > points[0].y;
        for w in points.windows(2) {
            let dy = w[1].y - w[0].y;
            if (increasing && dy <= 0.0) || (!increasing && dy >= 0.0) {
                return Err(ModelError::NonMonotonicChain);
            }
        }
        let segments: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        if let Some(i) = segments.iter().position(|&l| l <= 0.0) {
            return Err(ModelError::ZeroLengthSegment(i));
        }
        Ok(SampledCable { points, segments })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Segment lengths `l_1..l_{N-1}` in meters.
    pub fn segment_lengths(&self) -> &[f64] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().sum()
    }
}

/// Fitted model: coefficients, resampled chain, and the parameter range the
/// fit covers.
#[derive(Debug, Clone, Serialize)]
pub struct CableModel {
    pub coeffs: QuadCoeffs,
    pub chain: SampledCable,
    pub y_range: (f64, f64),
}

impl CableModel {
    /// Serialized record written into traces and by the fit-only mode.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "coeffs": self.coeffs.to_array(),
            "y_range": [self.y_range.0, self.y_range.1],
            "points": self.chain.points().iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
        })
    }
}

/// Feasible arc-length band for grasp points, measured from the tip.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspSpec {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for GraspSpec {
    fn default() -> Self {
        GraspSpec { d_min: 0.18, d_max: 0.30 }
    }
}

impl GraspSpec {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self, ModelError> {
        if !(0.0 < d_min && d_min < d_max) {
            return Err(ModelError::InvalidGraspSpec(d_min, d_max));
        }
        Ok(GraspSpec { d_min, d_max })
    }
}

/// Fold-filter tuning: y-bin width and the per-bin spread that counts as a
/// fold, both in meters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldFilterConfig {
    pub bin_width: f64,
    pub spread_threshold: f64,
    pub tip_end: TipEnd,
}

impl Default for FoldFilterConfig {
    fn default() -> Self {
        FoldFilterConfig { bin_width: 0.01, spread_threshold: 0.03, tip_end: TipEnd::MinY }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Robust bin spread: twice the median absolute deviation about the median.
/// For a bin holding two equally populated curve branches this approximates
/// the branch separation, while lone strays leave it untouched.
fn robust_spread(sorted: &[f64]) -> f64 {
    let m = median(sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - m).abs()).collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    2.0 * median(&dev)
}

/// Keep the largest tip-side prefix of the cloud on which x(y) and z(y) are
/// single-valued.
///
/// Points are bucketed into y bins; bins are walked from the tip-side end and
/// the walk stops at the first curve bin where x or z stop being
/// single-valued: either the bin's spread exceeds the fold threshold (two
/// balanced curve branches share the bin) or the bin median jumps more than
/// the threshold from the previous curve bin (the dominant branch switched).
/// Within accepted bins, points farther than the threshold from the bin median
/// are dropped as strays. Spread is the doubled median absolute deviation,
/// which tolerates isolated strays but flags an even two-branch split.
///
/// Bins holding far fewer points than a well-populated curve bin are stray
/// collections, not curve: they never anchor or stop the walk, and their
/// points survive only when close to the running curve estimate.
pub fn fold_filter(cloud: &PointCloud, cfg: &FoldFilterConfig) -> Result<PointCloud, ModelError> {
    if cloud.is_empty() {
        return Err(ModelError::EmptyCloud);
    }
    if cloud.len() == 1 {
        return Ok(cloud.clone());
    }
    let (y_min, y_max) = cloud
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let span = (y_max - y_min).max(1e-12);
    let n_bins = (span / cfg.bin_width).ceil().max(1.0) as usize;

    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, p) in cloud.points.iter().enumerate() {
        let b = (((p.y - y_min) / span) * n_bins as f64).floor() as usize;
        bins[b.min(n_bins - 1)].push(i);
    }

    let order: Vec<usize> = match cfg.tip_end {
        TipEnd::MinY => (0..n_bins).collect(),
        TipEnd::MaxY => (0..n_bins).rev().collect(),
    };

    // Curve bins are the heavily occupied ones; many near-empty stray bins can
    // outnumber them, so the cutoff is keyed to the upper occupancy range.
    let mut occupancies: Vec<usize> =
        bins.iter().filter(|b| !b.is_empty()).map(|b| b.len()).collect();
    occupancies.sort_unstable();
    let sparse_cutoff = if cloud.len() < 10 {
        1
    } else {
        let idx = ((occupancies.len() * 9) / 10).min(occupancies.len() - 1);
        (occupancies[idx].div_ceil(4)).max(2)
    };

    let mut keep = vec![false; cloud.len()];
    let mut kept_any = false;
    let mut prev_medians: Option<(f64, f64)> = None;
    'walk: for &b in &order {
        if bins[b].is_empty() {
            continue;
        }
        let mut xs: Vec<f64> = bins[b].iter().map(|&i| cloud.points[i].x).collect();
        let mut zs: Vec<f64> = bins[b].iter().map(|&i| cloud.points[i].z).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());

        if bins[b].len() < sparse_cutoff {
            if let Some((px, pz)) = prev_medians {
                for &i in &bins[b] {
                    let p = &cloud.points[i];
                    if (p.x - px).abs() <= cfg.spread_threshold
                        && (p.z - pz).abs() <= cfg.spread_threshold
                    {
                        keep[i] = true;
                        kept_any = true;
                    }
                }
            }
            continue;
        }

        if robust_spread(&xs) > cfg.spread_threshold || robust_spread(&zs) > cfg.spread_threshold {
            break 'walk;
        }
        let (mx, mz) = (median(&xs), median(&zs));
        if let Some((px, pz)) = prev_medians {
            if (mx - px).abs() > cfg.spread_threshold || (mz - pz).abs() > cfg.spread_threshold {
                break 'walk;
            }
        }
        prev_medians = Some((mx, mz));
        for &i in &bins[b] {
            let p = &cloud.points[i];
            if (p.x - mx).abs() <= cfg.spread_threshold && (p.z - mz).abs() <= cfg.spread_threshold
            {
                keep[i] = true;
                kept_any = true;
            }
        }
    }
    if !kept_any {
        return Err(ModelError::DegenerateShape);
    }
    Ok(cloud.filter_by_index(|i| keep[i]))
}

/// Least-squares quadratic fit `v = c0 + c1*y + c2*y^2` via the 3x3 normal
/// equations over accumulated moments.
pub fn fit_quadratic(samples: &[(f64, f64)]) -> Result<(f64, f64, f64), ModelError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &(y, _) in samples {
        if !distinct.contains(&y) {
            distinct.push(y);
            if distinct.len() >= 3 {
                break;
            }
        }
    }
    if samples.len() < 3 || distinct.len() < 3 {
        return Err(ModelError::RankDeficient(distinct.len()));
    }

    // Center y for conditioning; de-center the coefficients afterwards.
    let y_mean = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
    let mut m = [0.0f64; 5]; // sums of u^0..u^4
    let mut r = [0.0f64; 3]; // sums of v*u^0..u^2
    for &(y, v) in samples {
        let u = y - y_mean;
        let u2 = u * u;
        m[0] += 1.0;
        m[1] += u;
        m[2] += u2;
        m[3] += u2 * u;
        m[4] += u2 * u2;
        r[0] += v;
        r[1] += v * u;
        r[2] += v * u2;
    }
    let a = nalgebra::Matrix3::new(m[0], m[1], m[2], m[1], m[2], m[3], m[2], m[3], m[4]);
    let b = nalgebra::Vector3::new(r[0], r[1], r[2]);
    let c = a.lu().solve(&b).ok_or(ModelError::SingularFit)?;
    // v = c0 + c1*(y - ym) + c2*(y - ym)^2, expanded in y.
    let (c0, c1, c2) = (c[0], c[1], c[2]);
    Ok((c0 - c1 * y_mean + c2 * y_mean * y_mean, c1 - 2.0 * c2 * y_mean, c2))
}

/// Fit both planes and resample the curve into an N-point chain, uniform in y
/// over the cloud's y range, ordered so `p_1` is at the tip end.
pub fn build_model(cloud: &PointCloud, n: usize, tip_end: TipEnd) -> Result<CableModel, ModelError> {
    if n < 2 {
        return Err(ModelError::TooFewSamples(n));
    }
    let xy: Vec<(f64, f64)> = cloud.points.iter().map(|p| (p.y, p.x)).collect();
    let zy: Vec<(f64, f64)> = cloud.points.iter().map(|p| (p.y, p.z)).collect();
    let (a0, a1, a2) = fit_quadratic(&xy)?;
    let (b0, b1, b2) = fit_quadratic(&zy)?;
    let coeffs = QuadCoeffs::new((a0, a1, a2), (b0, b1, b2));

    let (y_min, y_max) = cloud
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let step = (y_max - y_min) / (n - 1) as f64;
    let mut points: Vec<Vec3> = (0..n).map(|i| coeffs.point_at(y_min + step * i as f64)).collect();
    if tip_end == TipEnd::MaxY {
        points.reverse();
    }
    let chain = SampledCable::new(points)?;
    Ok(CableModel { coeffs, chain, y_range: (y_min, y_max) })
}

/// Cumulative arc distances `d_s = sum_{i=1..s} l_i` from the tip, one entry
/// per segment end `s = 1..N-1`.
pub fn arc_lengths(chain: &SampledCable) -> Vec<f64> {
    chain
        .segment_lengths()
        .iter()
        .scan(0.0, |acc, l| {
            *acc += l;
            Some(*acc)
        })
        .collect()
}

/// Frame at `p_1`: x axis along the first segment, roll fixed to zero by the
/// gravity-aligned completion shared with the socket frame.
pub fn tip_frame(chain: &SampledCable) -> Result<RigidTransform, ModelError> {
    let p = chain.points();
    let tangent = p[1] - p[0];
    if tangent.norm() < 1e-9 {
        return Err(ModelError::DegenerateTangent);
    }
    Ok(frame_from_x_axis(p[0], tangent).0)
}

/// Selected grasp: segment-end index `s` (1-based, so the grasp point is
/// `p_{s+1}`), arc distance from the tip, and the grasp frame.
#[derive(Debug, Clone)]
pub struct GraspSelection {
    pub arc_index: usize,
    pub arc_distance: f64,
    pub point: Vec3,
    pub frame: RigidTransform,
}

/// Among samples with `d_s` in `[d_min, d_max]`, pick the one closest to the
/// band midpoint (ties go to the smaller index). The grasp frame is built like
/// the tip frame but at `p_{s+1}` with the tangent of segment `l_s`.
pub fn select_grasp(chain: &SampledCable, spec: &GraspSpec) -> Result<GraspSelection, ModelError> {
    let ds = arc_lengths(chain);
    let mid = 0.5 * (spec.d_min + spec.d_max);
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in ds.iter().enumerate() {
        if d < spec.d_min || d > spec.d_max {
            continue;
        }
        let score = (d - mid).abs();
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    let (i, _) = best.ok_or(ModelError::NoFeasibleGrasp(spec.d_min, spec.d_max))?;
    let p = chain.points();
    let tangent = p[i + 1] - p[i];
    if tangent.norm() < 1e-9 {
        return Err(ModelError::DegenerateTangent);
    }
    let (frame, _) = frame_from_x_axis(p[i + 1], tangent);
    Ok(GraspSelection { arc_index: i + 1, arc_distance: ds[i], point: p[i + 1], frame })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curve_cloud(coeffs: &QuadCoeffs, y0: f64, y1: f64, n: usize) -> PointCloud {
        let pts = (0..n)
            .map(|i| coeffs.point_at(y0 + (y1 - y0) * i as f64 / (n - 1) as f64))
            .collect();
        PointCloud::new(pts)
    }

    #[test]
    fn fold_filter_monotone_cloud_unchanged() {
        let coeffs = QuadCoeffs::new((0.0, 0.1, -0.3), (0.3, -0.1, -0.5));
        let cloud = curve_cloud(&coeffs, 0.0, 0.5, 200);
        let out = fold_filter(&cloud, &FoldFilterConfig::default()).unwrap();
        assert_eq!(out.len(), cloud.len());
    }

    #[test]
    fn fold_filter_single_point_unchanged() {
        let cloud = PointCloud::new(vec![Vec3::new(0.1, 0.2, 0.3)]);
        let out = fold_filter(&cloud, &FoldFilterConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn fold_filter_cuts_fold_and_output_is_single_valued() {
        // A "⊃" shape: the cable runs out along y, folds, and doubles back at
        // a different x, so the tail bins hold two branches.
        let mut pts = Vec::new();
        for i in 0..400 {
            let t = i as f64 / 399.0;
            let y = if t < 0.7 { t * 0.5 / 0.7 } else { 0.5 - (t - 0.7) * 0.4 };
            let x = if t < 0.7 { 0.0 } else { 0.25 };
            pts.push(Vec3::new(x, y, 0.1));
        }
        let cloud = PointCloud::new(pts);
        let out = fold_filter(&cloud, &FoldFilterConfig::default()).unwrap();
        assert!(out.len() < cloud.len());

        // Brute-force single-valuedness scan on the retained subset.
        let cfg = FoldFilterConfig::default();
        let (y_min, y_max) = out
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
        let n_bins = (((y_max - y_min) / cfg.bin_width).ceil() as usize).max(1);
        let mut bin_x: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
        for p in &out.points {
            let b = (((p.y - y_min) / (y_max - y_min).max(1e-12)) * n_bins as f64) as usize;
            bin_x[b.min(n_bins - 1)].push(p.x);
        }
        for xs in bin_x.iter().filter(|v| !v.is_empty()) {
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo <= cfg.spread_threshold + 1e-12, "multivalued bin retained");
        }
    }

    #[test]
    fn fold_filter_fold_at_first_bin_is_degenerate() {
        // Two parallel branches share every bin from the start.
        let mut pts = Vec::new();
        for i in 0..200 {
            let y = 0.4 * i as f64 / 199.0;
            pts.push(Vec3::new(0.0, y, 0.0));
            pts.push(Vec3::new(0.3, y + 1e-4, 0.0));
        }
        let err = fold_filter(&PointCloud::new(pts), &FoldFilterConfig::default()).unwrap_err();
        assert!(matches!(err, ModelError::DegenerateShape));
    }

    #[test]
    fn tip_frame_degenerate_tangent_errors() {
        let chain = SampledCable::new(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1e-10, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ])
        .unwrap();
        assert!(matches!(tip_frame(&chain), Err(ModelError::DegenerateTangent)));
    }

    #[test]
    fn select_grasp_tie_goes_to_smaller_index() {
        // d = {0.20, 0.28}: both 0.04 from the 0.24 midpoint.
        let chain = chain_with_arcs(&[0.20, 0.28]);
        let spec = GraspSpec::new(0.18, 0.30).unwrap();
        let g = select_grasp(&chain, &spec).unwrap();
        assert_eq!(g.arc_index, 1);
        assert_relative_eq!(g.arc_distance, 0.20, epsilon = 1e-12);
    }

    #[test]
    fn fold_filter_drops_strays_within_bins() {
        let coeffs = QuadCoeffs::new((0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
        let mut cloud = curve_cloud(&coeffs, 0.0, 0.5, 300);
        cloud.points.push(Vec3::new(0.4, 0.25, 0.0)); // stray far off the curve
        let out = fold_filter(&cloud, &FoldFilterConfig::default()).unwrap();
        assert_eq!(out.len(), 300);
    }

    #[test]
    fn fit_quadratic_zero_and_exact() {
        let samples: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.1, 0.0)).collect();
        let (c0, c1, c2) = fit_quadratic(&samples).unwrap();
        assert!(c0.abs() < 1e-12 && c1.abs() < 1e-12 && c2.abs() < 1e-12);

        let samples: Vec<(f64, f64)> =
            (0..50).map(|i| {
                let y = -1.0 + i as f64 * 0.04;
                (y, 1.0 + 2.0 * y + 3.0 * y * y)
            }).collect();
        let (c0, c1, c2) = fit_quadratic(&samples).unwrap();
        assert_relative_eq!(c0, 1.0, epsilon = 1e-9);
        assert_relative_eq!(c1, 2.0, epsilon = 1e-9);
        assert_relative_eq!(c2, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_quadratic_rank_deficient() {
        let samples = vec![(0.0, 1.0), (0.0, 2.0), (1.0, 3.0), (1.0, 4.0)];
        assert!(matches!(fit_quadratic(&samples), Err(ModelError::RankDeficient(2))));
    }

    /// Independent dense normal-equations oracle: full design matrix + QR.
    fn fit_oracle(samples: &[(f64, f64)]) -> (f64, f64, f64) {
        let n = samples.len();
        let mut design = nalgebra::DMatrix::<f64>::zeros(n, 3);
        let mut rhs = nalgebra::DVector::<f64>::zeros(n);
        for (i, &(y, v)) in samples.iter().enumerate() {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = y;
            design[(i, 2)] = y * y;
            rhs[i] = v;
        }
        let sol = design.svd(true, true).solve(&rhs, 1e-14).unwrap();
        (sol[0], sol[1], sol[2])
    }

    #[test]
    fn fit_quadratic_matches_oracle_on_noisy_cloud() {
        // Generator coefficients: one of the stored "middle" cable shapes.
        let truth = (-0.385, -2.670, -2.191);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sigma = 0.005;
        let samples: Vec<(f64, f64)> = (0..2000)
            .map(|_| {
                let y = rng.random_range(-0.78..-0.55);
                let v = truth.0
                    + truth.1 * y
                    + truth.2 * y * y
                    + rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
                (y, v)
            })
            .collect();
        let got = fit_quadratic(&samples).unwrap();
        let oracle = fit_oracle(&samples);
        assert!((got.0 - oracle.0).abs() < 1e-9);
        assert!((got.1 - oracle.1).abs() < 1e-9);
        assert!((got.2 - oracle.2).abs() < 1e-9);
    }

    #[test]
    fn build_model_ten_samples_nine_segments() {
        let coeffs = QuadCoeffs::new((0.1, -0.4, 0.2), (0.3, -0.2, -0.6));
        let cloud = curve_cloud(&coeffs, 0.0, 0.45, 500);
        let model = build_model(&cloud, 10, TipEnd::MinY).unwrap();
        assert_eq!(model.chain.len(), 10);
        assert_eq!(model.chain.segment_lengths().len(), 9);
        // Chain points reproduce the generator curve.
        for p in model.chain.points() {
            let q = coeffs.point_at(p.y);
            assert!((p - q).norm() < 1e-6);
        }
        // Uniform y spacing.
        let dys: Vec<f64> =
            model.chain.points().windows(2).map(|w| w[1].y - w[0].y).collect();
        for dy in &dys {
            assert!((dy - dys[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn build_model_straight_line_care() {
        let coeffs = QuadCoeffs::new((0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
        let cloud = curve_cloud(&coeffs, 0.0, 1.0, 100);
        let model = build_model(&cloud, 11, TipEnd::MinY).unwrap();
        let lens = model.chain.segment_lengths();
        for l in lens {
            assert_relative_eq!(*l, 0.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn arc_lengths_additivity() {
        let pts: Vec<Vec3> = (0..2).map(|i| Vec3::new(0.0, i as f64, 0.0)).collect();
        let chain = SampledCable::new(pts).unwrap();
        assert_eq!(arc_lengths(&chain), vec![1.0]);

        let pts: Vec<Vec3> = (0..6).map(|i| Vec3::new(0.0, 0.1 * i as f64, 0.0)).collect();
        let chain = SampledCable::new(pts).unwrap();
        let ds = arc_lengths(&chain);
        for (s, d) in ds.iter().enumerate() {
            assert_relative_eq!(*d, 0.1 * (s + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn arc_length_matches_quadrature_oracle() {
        let coeffs = QuadCoeffs::new((0.2, -1.1, 0.8), (-0.1, 0.6, -1.3));
        let (y0, y1) = (-0.3, 0.4);
        let cloud = curve_cloud(&coeffs, y0, y1, 4000);
        let model = build_model(&cloud, 200, TipEnd::MinY).unwrap();
        let chain_len = model.chain.total_length();

        // 1e5-step midpoint quadrature of the true curve length.
        let steps = 100_000;
        let h = (y1 - y0) / steps as f64;
        let quad: f64 = (0..steps)
            .map(|i| coeffs.tangent_at(y0 + (i as f64 + 0.5) * h).norm() * h)
            .sum();
        assert!(
            (chain_len - quad).abs() / quad < 1e-3,
            "chain {chain_len} vs quadrature {quad}"
        );
    }

    #[test]
    fn tip_frame_axis_aligned_and_random() {
        let chain =
            SampledCable::new(vec![Vec3::zeros(), Vec3::new(0.0, 0.1, 0.0), Vec3::new(0.0, 0.2, 0.0)])
                .unwrap();
        let f = tip_frame(&chain).unwrap();
        assert_relative_eq!(f.x_axis(), Vec3::y(), epsilon = 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..1.0),
                rng.random_range(-1.0..1.0),
            );
            let p0 = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let chain = SampledCable::new(vec![p0, p0 + dir * 0.2, p0 + dir * 0.4]).unwrap();
            let f = tip_frame(&chain).unwrap();
            assert!((f.x_axis() - dir.normalize()).norm() < 1e-9);
            let m = f.rotation_matrix();
            assert!((m * m.transpose() - nalgebra::Matrix3::identity()).norm() < 1e-9);
            assert!((m.determinant() - 1.0).abs() < 1e-9);
        }
    }

    fn chain_with_arcs(arcs: &[f64]) -> SampledCable {
        // Build a straight y-aligned chain with the given cumulative arcs.
        let mut pts = vec![Vec3::zeros()];
        let mut prev = 0.0;
        for &d in arcs {
            pts.push(Vec3::new(0.0, d, 0.0));
            assert!(d > prev);
            prev = d;
        }
        SampledCable::new(pts).unwrap()
    }

    #[test]
    fn select_grasp_midpoint_rule() {
        let chain = chain_with_arcs(&[0.1, 0.2, 0.24, 0.29, 0.4]);
        let spec = GraspSpec::new(0.18, 0.30).unwrap();
        let g = select_grasp(&chain, &spec).unwrap();
        assert_relative_eq!(g.arc_distance, 0.24, epsilon = 1e-12);
        assert_eq!(g.arc_index, 3);
        assert!(g.arc_distance >= spec.d_min && g.arc_distance <= spec.d_max);
    }

    #[test]
    fn select_grasp_empty_and_singleton_feasible() {
        let chain = chain_with_arcs(&[0.05, 0.1, 0.15]);
        let spec = GraspSpec::new(0.18, 0.30).unwrap();
        assert!(matches!(select_grasp(&chain, &spec), Err(ModelError::NoFeasibleGrasp(_, _))));

        let chain = chain_with_arcs(&[0.05, 0.19, 0.45]);
        let g = select_grasp(&chain, &spec).unwrap();
        assert_relative_eq!(g.arc_distance, 0.19, epsilon = 1e-12);
    }

    #[test]
    fn chord_length_monotone_under_refinement() {
        let coeffs = QuadCoeffs::new((0.0, 0.7, -0.9), (0.2, -0.3, -1.1));
        let cloud = curve_cloud(&coeffs, 0.0, 0.6, 2000);
        let mut prev = 0.0;
        for n in [5usize, 9, 17, 33, 65] {
            let model = build_model(&cloud, n, TipEnd::MinY).unwrap();
            let len = model.chain.total_length();
            assert!(len >= prev - 1e-12, "refinement decreased chord length");
            prev = len;
        }
    }

    #[test]
    fn fit_residual_on_own_output_is_zero() {
        let samples: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let y = i as f64 * 0.01;
                (y, -0.3 + 1.2 * y - 0.8 * y * y + ((i % 7) as f64 - 3.0) * 1e-3)
            })
            .collect();
        let (c0, c1, c2) = fit_quadratic(&samples).unwrap();
        let refit: Vec<(f64, f64)> =
            samples.iter().map(|&(y, _)| (y, c0 + c1 * y + c2 * y * y)).collect();
        let (d0, d1, d2) = fit_quadratic(&refit).unwrap();
        assert!((d0 - c0).abs() < 1e-9 && (d1 - c1).abs() < 1e-9 && (d2 - c2).abs() < 1e-9);
    }
}
