//! Point clouds in the world frame, with optional per-point provenance that
//! only the synthetic scene generator fills in.

use crate::frames::Vec3;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use thiserror::Error;

/// Where a synthetic point came from. Estimation paths never see labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Cable,
    Wall,
    Outlier,
}

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected `x y z`, got {text:?}")]
    Parse { line: usize, text: String },
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Ground-truth provenance, present only on generator output.
    pub labels: Option<Vec<PointLabel>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points, labels: None }
    }

    pub fn with_labels(points: Vec<Vec3>, labels: Vec<PointLabel>) -> Self {
        debug_assert_eq!(points.len(), labels.len());
        PointCloud { points, labels: Some(labels) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keep the points (and labels) whose index satisfies `keep`, preserving order.
    pub fn filter_by_index(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let mut points = Vec::new();
        let mut labels = self.labels.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if keep(i) {
                points.push(*p);
                if let (Some(out), Some(src)) = (labels.as_mut(), self.labels.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        PointCloud { points, labels }
    }

    /// Text form: one `x y z` line per point. Lossless for f64.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# point cloud, {} points, columns: x y z (meters)", self.len());
        for p in &self.points {
            let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CloudError> {
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Option<f64> { tok?.parse().ok() };
            match (parse(it.next()), parse(it.next()), parse(it.next()), it.next()) {
                (Some(x), Some(y), Some(z), None) => points.push(Vec3::new(x, y, z)),
                _ => {
                    return Err(CloudError::Parse { line: idx + 1, text: raw.to_string() });
                }
            }
        }
        Ok(PointCloud::new(points))
    }

    pub fn save(&self, path: &Path) -> Result<(), CloudError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CloudError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let cloud = PointCloud::new(vec![
            Vec3::new(0.1, -2.0, 3.5e-7),
            Vec3::new(1.0 / 3.0, f64::MIN_POSITIVE, -0.0),
        ]);
        let back = PointCloud::from_text(&cloud.to_text()).unwrap();
        assert_eq!(cloud.points, back.points);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# header\n\n1 2 3\n   # inline comment line\n4 5 6\n";
        let cloud = PointCloud::from_text(text).unwrap();
        assert_eq!(cloud.points, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = PointCloud::from_text("1 2 3\n1 2\n").unwrap_err();
        match err {
            CloudError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn filter_keeps_labels_aligned() {
        let cloud = PointCloud::with_labels(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            vec![PointLabel::Cable, PointLabel::Outlier, PointLabel::Cable],
        );
        let kept = cloud.filter_by_index(|i| i != 1);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept.labels.unwrap(), vec![PointLabel::Cable, PointLabel::Cable]);
    }
}
