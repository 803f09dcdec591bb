//! Small geometric helpers shared by the environment and localization code.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Closest point on the segment `[a, b]` to `p`.
pub fn closest_point_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

/// Minimum distance between two segments `[p0, p1]` and `[q0, q1]`.
pub fn segment_segment_distance(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return r.norm();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// An ordered list of vertices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec3>,
}

impl Polyline {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of edge lengths.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, |acc, d| acc + d)
    }

    pub fn first(&self) -> Option<&Vec3> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&Vec3> {
        self.points.last()
    }

    /// Distance from `p` to the nearest point of the polyline, or `None` when
    /// the polyline is empty. Linear scan; see
    /// [`crate::localization::NearestSegmentIndex`] for repeated queries.
    pub fn distance_to(&self, p: &Vec3) -> Option<f64> {
        match self.points.len() {
            0 => None,
            1 => Some((p - self.points[0]).norm()),
            _ => self
                .points
                .windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .min_by(f64::total_cmp),
        }
    }

    /// Applies `f` to every vertex.
    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Polyline {
        Polyline::new(self.points.iter().map(f).collect())
    }
}

impl From<Vec<Vec3>> for Polyline {
    fn from(points: Vec<Vec3>) -> Self {
        Self::new(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(point_segment_distance(&Vec3::new(0.5, 2.0, 0.0), &a, &b), 2.0);
        assert_eq!(point_segment_distance(&Vec3::new(-3.0, 0.0, 4.0), &a, &b), 5.0);
        // crossing skew segments
        let d = segment_segment_distance(
            &a,
            &b,
            &Vec3::new(0.5, -1.0, 0.3),
            &Vec3::new(0.5, 1.0, 0.3),
        );
        assert!((d - 0.3).abs() < 1e-15);
        // parallel
        let d = segment_segment_distance(
            &a,
            &b,
            &Vec3::new(2.0, 1.0, 0.0),
            &Vec3::new(3.0, 1.0, 0.0),
        );
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn polyline_length_and_distance() {
        let pl = Polyline::new(vec![
            Vec3::zeros(),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(3.0, 4.0, 0.0),
        ]);
        assert_eq!(pl.length(), 7.0);
        assert_eq!(pl.distance_to(&Vec3::new(4.0, 2.0, 0.0)), Some(1.0));
        assert_eq!(Polyline::default().distance_to(&Vec3::zeros()), None);
    }
}
