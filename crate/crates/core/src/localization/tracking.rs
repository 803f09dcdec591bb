use serde::{Deserialize, Serialize};

use super::{LocalizationError, TrajectoryEstimate};
use crate::geometry::{point_segment_distance, Polyline, Vec3};

const BLOCK: usize = 32;

/// Nearest-segment queries against a fixed polyline. Segments are grouped in
/// consecutive blocks with bounding boxes; blocks are visited in order of
/// their box distance and skipped once they cannot beat the best hit.
#[derive(Debug, Clone)]
pub struct NearestSegmentIndex {
    points: Vec<Vec3>,
    blocks: Vec<(usize, usize, Vec3, Vec3)>,
}

impl NearestSegmentIndex {
    pub fn new(polyline: &Polyline) -> Result<Self, LocalizationError> {
        if polyline.is_empty() {
            return Err(LocalizationError::Empty("reference polyline"));
        }
        let points = polyline.points.clone();
        let n_seg = points.len().saturating_sub(1).max(1);
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n_seg {
            let end = (start + BLOCK).min(n_seg);
            let last_point = (end).min(points.len() - 1);
            let mut lo = points[start];
            let mut hi = points[start];
            for p in &points[start..=last_point] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            blocks.push((start, end, lo, hi));
            start = end;
        }
        Ok(Self { points, blocks })
    }

    fn segment_distance(&self, i: usize, p: &Vec3) -> f64 {
        if self.points.len() == 1 {
            return (p - self.points[0]).norm();
        }
        point_segment_distance(p, &self.points[i], &self.points[i + 1])
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut order: Vec<(f64, usize)> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, (_, _, lo, hi))| {
                let gap = (lo - p).sup(&(p - hi)).sup(&Vec3::zeros());
                (gap.norm(), k)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = f64::INFINITY;
        for (bound, k) in order {
            if bound > best {
                break;
            }
            let (start, end, _, _) = self.blocks[k];
            for i in start..end {
                best = best.min(self.segment_distance(i, p));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrorReport {
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub max: f64,
    pub per_sample: Vec<f64>,
}

/// Distance from each estimated position to the closest point of `reference`.
pub fn tracking_error(
    estimate: &TrajectoryEstimate,
    reference: &Polyline,
) -> Result<TrackingErrorReport, LocalizationError> {
    if estimate.samples.is_empty() {
        return Err(LocalizationError::Empty("trajectory estimate"));
    }
    let index = NearestSegmentIndex::new(reference)?;
    let per_sample: Vec<f64> = estimate.samples.iter().map(|s| index.distance(&s.p)).collect();
    let n = per_sample.len() as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    let var = per_sample.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let max = per_sample.iter().copied().fold(0.0, f64::max);
    Ok(TrackingErrorReport {
        mean,
        std_dev: var.sqrt(),
        max,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::super::TrajectorySample;
    use super::*;
    use nalgebra::UnitQuaternion;

    fn estimate(points: &[Vec3]) -> TrajectoryEstimate {
        TrajectoryEstimate {
            samples: points
                .iter()
                .enumerate()
                .map(|(i, p)| TrajectorySample {
                    t: i as f64,
                    p: *p,
                    v: Vec3::zeros(),
                    q: UnitQuaternion::identity(),
                })
                .collect(),
        }
    }

    fn zigzag(n: usize) -> Polyline {
        Polyline::new(
            (0..n)
                .map(|i| {
                    let s = i as f64 * 0.01;
                    Vec3::new(s, (s * 7.0).sin() * 0.1, (s * 3.0).cos() * 0.05)
                })
                .collect(),
        )
    }

    #[test]
    fn identical_gives_zero() {
        let reference = zigzag(200);
        let report = tracking_error(&estimate(&reference.points), &reference).unwrap();
        assert_eq!(report.mean, 0.0);
        assert_eq!(report.std_dev, 0.0);
    }

    #[test]
    fn constant_lateral_offset() {
        let reference = Polyline::new(vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]);
        let pts: Vec<_> = (0..=20).map(|i| Vec3::new(0.1 * i as f64, 0.18, 0.0)).collect();
        let report = tracking_error(&estimate(&pts), &reference).unwrap();
        assert!((report.mean - 0.18).abs() < 1e-12);
        assert!(report.std_dev < 1e-12);
    }

    #[test]
    fn index_matches_linear_scan() {
        let reference = zigzag(1000);
        let index = NearestSegmentIndex::new(&reference).unwrap();
        for i in 0..300 {
            let f = i as f64;
            let p = Vec3::new((f * 0.37).sin() * 6.0 + 3.0, (f * 0.11).cos() * 0.5, (f * 0.73).sin() * 0.3);
            let linear = reference.distance_to(&p).unwrap();
            assert!((index.distance(&p) - linear).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let reference = zigzag(10);
        assert!(tracking_error(&TrajectoryEstimate::default(), &reference).is_err());
        assert!(tracking_error(&estimate(&[Vec3::zeros()]), &Polyline::default()).is_err());
    }
}
