use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::EnvironmentError;
use crate::geometry::{segment_segment_distance, Vec3};

const POSITION_TOLERANCE: f64 = 1e-6;
const ANGLE_TOLERANCE_DEG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: String,
    pub start: Vec3,
    pub end: Vec3,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSpec {
    pub id: String,
    pub position: Vec3,
    /// Segment whose end carries the junction.
    pub incoming: String,
    pub branch_ids: Vec<String>,
    /// Angle between the incoming axis and each branch axis, degrees.
    pub branch_angles: Vec<f64>,
    /// Overrides the course-wide connector radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connector_radius: Option<f64>,
}

/// Structured course description, usually loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseSpec {
    /// Radius of the connector arcs; `None` uses one diameter of the incoming
    /// segment and `0` gives sharp kinks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connector_radius: Option<f64>,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub junctions: Vec<JunctionSpec>,
    pub entry: String,
}

/// Circular arc leaving `start` along `t_in` and turning by `angle` toward `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectorArc {
    pub start: Vec3,
    pub t_in: Vec3,
    /// Unit normal in the turning plane, perpendicular to `t_in`.
    pub u: Vec3,
    pub radius: f64,
    /// Turning angle, radians.
    pub angle: f64,
}

impl ConnectorArc {
    pub fn new(start: Vec3, t_in: Vec3, t_out: Vec3, radius: f64) -> Self {
        let cos = t_in.dot(&t_out).clamp(-1.0, 1.0);
        let perp = t_out - t_in * cos;
        let u = if perp.norm() > 1e-12 {
            perp.normalize()
        } else {
            any_perpendicular(&t_in)
        };
        Self {
            start,
            t_in,
            u,
            radius,
            angle: perp.norm().atan2(cos),
        }
    }

    pub fn length(&self) -> f64 {
        self.radius * self.angle
    }

    pub fn is_degenerate(&self) -> bool {
        self.length() == 0.0
    }

    pub fn point(&self, psi: f64) -> Vec3 {
        let (s, c) = psi.sin_cos();
        self.start + (self.u * (1.0 - c) + self.t_in * s) * self.radius
    }

    pub fn tangent(&self, psi: f64) -> Vec3 {
        let (s, c) = psi.sin_cos();
        self.t_in * c + self.u * s
    }

    pub fn end(&self) -> Vec3 {
        self.point(self.angle)
    }

    pub fn t_out(&self) -> Vec3 {
        self.tangent(self.angle)
    }

    /// Rotation axis of the turn, `t_in × u`.
    pub fn axis(&self) -> Vec3 {
        self.t_in.cross(&self.u)
    }

    /// Closest point of the arc to `p`.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        if self.is_degenerate() {
            return self.start;
        }
        let center = self.start + self.u * self.radius;
        let v = p - center;
        let a = -v.dot(&self.u);
        let b = v.dot(&self.t_in);
        let psi = b.atan2(a);
        if (0.0..=self.angle).contains(&psi) && (a != 0.0 || b != 0.0) {
            return self.point(psi);
        }
        let (p0, p1) = (self.start, self.end());
        if (p - p0).norm() <= (p - p1).norm() {
            p0
        } else {
            p1
        }
    }
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let trial = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (trial - v * v.dot(&trial)).normalize()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeSegment {
    pub id: String,
    pub start: Vec3,
    pub end: Vec3,
    pub diameter: f64,
    /// Junction at `end`, if any.
    pub end_junction: Option<usize>,
    /// `(junction, branch index)` this segment leaves from.
    pub parent: Option<(usize, usize)>,
}

impl PipeSegment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn axis(&self) -> Vec3 {
        (self.end - self.start).normalize()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: String,
    pub position: Vec3,
    pub incoming: usize,
    pub branches: Vec<usize>,
    pub angles_deg: Vec<f64>,
    /// Connector into each branch.
    pub arcs: Vec<ConnectorArc>,
}

/// Validated, immutable pipe tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeNetwork {
    pub segments: Vec<PipeSegment>,
    pub junctions: Vec<Junction>,
    pub entry: usize,
}

impl PipeNetwork {
    pub fn segment_index(&self, id: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.id == id)
    }

    pub fn entry_segment(&self) -> &PipeSegment {
        &self.segments[self.entry]
    }

    /// Sum of segment lengths and connector arc lengths over the whole tree.
    pub fn total_length(&self) -> f64 {
        let segs: f64 = self.segments.iter().map(PipeSegment::length).sum();
        let arcs: f64 = self
            .junctions
            .iter()
            .flat_map(|j| j.arcs.iter())
            .map(ConnectorArc::length)
            .sum();
        segs + arcs
    }

    /// Returns every diameter multiplied by `factor`; geometry is unchanged.
    pub fn scaled_diameters(&self, factor: f64) -> PipeNetwork {
        let mut out = self.clone();
        for s in &mut out.segments {
            s.diameter *= factor;
        }
        out
    }
}

/// Validates `spec` and builds the network.
pub fn build_course(spec: &CourseSpec) -> Result<PipeNetwork, EnvironmentError> {
    let mut index = HashMap::new();
    let mut segments = Vec::with_capacity(spec.segments.len());
    for s in &spec.segments {
        if index.insert(s.id.clone(), segments.len()).is_some() {
            return Err(EnvironmentError::DuplicateId(s.id.clone()));
        }
        let len = (s.end - s.start).norm();
        if !(len > 0.0 && len.is_finite()) {
            return Err(EnvironmentError::ZeroLengthSegment(s.id.clone()));
        }
        if !(s.diameter > 0.0 && s.diameter.is_finite()) {
            return Err(EnvironmentError::InvalidDiameter {
                id: s.id.clone(),
                diameter: s.diameter,
            });
        }
        segments.push(PipeSegment {
            id: s.id.clone(),
            start: s.start,
            end: s.end,
            diameter: s.diameter,
            end_junction: None,
            parent: None,
        });
    }
    if let Some(r) = spec.connector_radius {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(EnvironmentError::InvalidSpec(format!("connector radius {r}")));
        }
    }
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| EnvironmentError::UnknownSegment(id.to_string()))
    };
    let entry = lookup(&spec.entry)?;

    let mut junction_ids = HashMap::new();
    let mut junctions = Vec::with_capacity(spec.junctions.len());
    for (ji, j) in spec.junctions.iter().enumerate() {
        if junction_ids.insert(j.id.clone(), ji).is_some() || index.contains_key(&j.id) {
            return Err(EnvironmentError::DuplicateId(j.id.clone()));
        }
        let incoming = lookup(&j.incoming)?;
        if segments[incoming].end_junction.is_some() {
            return Err(EnvironmentError::NotATree(j.incoming.clone()));
        }
        if (segments[incoming].end - j.position).norm() > POSITION_TOLERANCE {
            return Err(EnvironmentError::MisplacedJunction { junction: j.id.clone() });
        }
        if j.branch_ids.is_empty() {
            return Err(EnvironmentError::NoBranches(j.id.clone()));
        }
        if j.branch_ids.len() != j.branch_angles.len() {
            return Err(EnvironmentError::BranchArity(j.id.clone()));
        }
        let radius = j
            .connector_radius
            .or(spec.connector_radius)
            .unwrap_or(segments[incoming].diameter);
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(EnvironmentError::InvalidSpec(format!("connector radius {radius}")));
        }
        let t_in = segments[incoming].axis();
        let mut branches = Vec::new();
        let mut arcs = Vec::new();
        for (bi, (bid, &angle)) in j.branch_ids.iter().zip(&j.branch_angles).enumerate() {
            if !(0.0..180.0).contains(&angle) {
                return Err(EnvironmentError::AngleOutOfRange {
                    junction: j.id.clone(),
                    branch: bid.clone(),
                    angle,
                });
            }
            let b = lookup(bid)?;
            if b == entry || segments[b].parent.is_some() {
                return Err(EnvironmentError::NotATree(bid.clone()));
            }
            let t_out = segments[b].axis();
            let actual = t_in.dot(&t_out).clamp(-1.0, 1.0).acos().to_degrees();
            if (actual - angle).abs() > ANGLE_TOLERANCE_DEG {
                return Err(EnvironmentError::AngleMismatch {
                    junction: j.id.clone(),
                    branch: bid.clone(),
                    declared: angle,
                    actual,
                });
            }
            let arc = ConnectorArc::new(j.position, t_in, t_out, radius);
            if (arc.end() - segments[b].start).norm() > POSITION_TOLERANCE {
                return Err(EnvironmentError::Disconnected(bid.clone()));
            }
            segments[b].parent = Some((ji, bi));
            branches.push(b);
            arcs.push(arc);
        }
        segments[incoming].end_junction = Some(ji);
        junctions.push(Junction {
            id: j.id.clone(),
            position: j.position,
            incoming,
            branches,
            angles_deg: j.branch_angles.clone(),
            arcs,
        });
    }

    // every segment must hang off the entry
    let mut seen = vec![false; segments.len()];
    let mut queue = VecDeque::from([entry]);
    seen[entry] = true;
    while let Some(s) = queue.pop_front() {
        if let Some(j) = segments[s].end_junction {
            for &b in &junctions[j].branches {
                if !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
    }
    if let Some(i) = seen.iter().position(|v| !v) {
        return Err(EnvironmentError::Disconnected(segments[i].id.clone()));
    }

    let junction_of = |s: &PipeSegment| s.parent.map(|(j, _)| j);
    for i in 0..segments.len() {
        for k in i + 1..segments.len() {
            let (a, b) = (&segments[i], &segments[k]);
            let adjacent = (a.end_junction.is_some() && a.end_junction == junction_of(b))
                || (b.end_junction.is_some() && b.end_junction == junction_of(a))
                || (junction_of(a).is_some() && junction_of(a) == junction_of(b));
            if adjacent {
                continue;
            }
            let d = segment_segment_distance(&a.start, &a.end, &b.start, &b.end);
            if d < 0.5 * (a.diameter + b.diameter) {
                return Err(EnvironmentError::SelfIntersecting(a.id.clone(), b.id.clone()));
            }
        }
    }

    Ok(PipeNetwork {
        segments,
        junctions,
        entry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str, start: Vec3, end: Vec3) -> SegmentSpec {
        SegmentSpec {
            id: id.into(),
            start,
            end,
            diameter: 0.05,
        }
    }

    fn elbow(angle_deg: f64, declared: f64) -> CourseSpec {
        let a = angle_deg.to_radians();
        let j = Vec3::new(0.2, 0.0, 0.0);
        let arc = ConnectorArc::new(j, Vec3::x(), Vec3::new(a.cos(), a.sin(), 0.0), 0.05);
        let dir = arc.t_out();
        CourseSpec {
            connector_radius: None,
            segments: vec![
                seg("a", Vec3::zeros(), j),
                seg("b", arc.end(), arc.end() + dir * 0.2),
            ],
            junctions: vec![JunctionSpec {
                id: "j".into(),
                position: j,
                incoming: "a".into(),
                branch_ids: vec!["b".into()],
                branch_angles: vec![declared],
                connector_radius: None,
            }],
            entry: "a".into(),
        }
    }

    #[test]
    fn single_segment_has_no_junctions() {
        let spec = CourseSpec {
            connector_radius: None,
            segments: vec![seg("a", Vec3::zeros(), Vec3::x())],
            junctions: vec![],
            entry: "a".into(),
        };
        let net = build_course(&spec).unwrap();
        assert!(net.junctions.is_empty());
        assert_eq!(net.total_length(), 1.0);
    }

    #[test]
    fn elbow_builds_and_measures() {
        let net = build_course(&elbow(45.0, 45.0)).unwrap();
        let arc = net.junctions[0].arcs[0];
        assert!((arc.angle.to_degrees() - 45.0).abs() < 1e-12);
        let expected = 0.4 + 0.05 * std::f64::consts::FRAC_PI_4;
        assert!((net.total_length() - expected).abs() < 1e-12);
    }

    #[test]
    fn angle_mismatch_rejected() {
        assert!(matches!(
            build_course(&elbow(45.0, 45.2)),
            Err(EnvironmentError::AngleMismatch { .. })
        ));
        assert!(build_course(&elbow(45.0, 45.05)).is_ok());
    }

    #[test]
    fn gap_is_disconnected() {
        let mut spec = elbow(45.0, 45.0);
        spec.segments[1].start += Vec3::new(0.0, 0.0, 0.01);
        spec.segments[1].end += Vec3::new(0.0, 0.0, 0.01);
        assert!(matches!(build_course(&spec), Err(EnvironmentError::Disconnected(_))));
        let mut orphan = elbow(45.0, 45.0);
        orphan.junctions.clear();
        assert!(matches!(build_course(&orphan), Err(EnvironmentError::Disconnected(_))));
    }

    #[test]
    fn crossing_segments_rejected() {
        // three 90° kinks bring the last segment back across the first
        let mut segments = vec![seg("s0", Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0))];
        let mut junctions = vec![];
        let mut dir = Vec3::x();
        let mut end = Vec3::new(0.3, 0.0, 0.0);
        for k in 0..3 {
            let a = 90f64.to_radians();
            let t_out = Vec3::new(
                dir.x * a.cos() - dir.y * a.sin(),
                dir.x * a.sin() + dir.y * a.cos(),
                0.0,
            );
            let arc = ConnectorArc::new(end, dir, t_out, 0.0);
            let id = format!("s{}", k + 1);
            let len = if k == 0 { 0.2 } else { 0.3 };
            segments.push(seg(&id, arc.end(), arc.end() + t_out * len));
            junctions.push(JunctionSpec {
                id: format!("j{k}"),
                position: end,
                incoming: format!("s{k}"),
                branch_ids: vec![id],
                branch_angles: vec![90.0],
                connector_radius: Some(0.0),
            });
            end = arc.end() + t_out * len;
            dir = t_out;
        }
        let spec = CourseSpec {
            connector_radius: None,
            segments,
            junctions,
            entry: "s0".into(),
        };
        assert!(matches!(
            build_course(&spec),
            Err(EnvironmentError::SelfIntersecting(_, _))
        ));
    }

    #[test]
    fn json_round_trip() {
        let spec = elbow(30.0, 30.0);
        let text = serde_json::to_string(&spec).unwrap();
        let back: CourseSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(build_course(&back).unwrap(), build_course(&spec).unwrap());
    }

    #[test]
    fn arc_closest_point() {
        let arc = ConnectorArc::new(Vec3::zeros(), Vec3::x(), Vec3::y(), 1.0);
        let p = arc.closest_point(&Vec3::new(2.0, 1.0, 0.3));
        assert!((p - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
        let q = arc.closest_point(&Vec3::new(-1.0, -0.2, 0.0));
        assert_eq!(q, Vec3::zeros());
    }
}
