//! Built-in courses.
//!
//! - `pipe3d-45`: six 0.2 m × 5 cm segments joined by 45° connectors turning
//!   left, up, right, down and left.
//! - `branch2d-7`: a planar course of seven junctions, each offering a
//!   forward stub and a 45° right branch; links are 15 cm × 5.3 cm.
//! - `climb45`: a 5.3 cm pipe with one junction offering forward or a 45°
//!   turn against gravity.
//! - `burrow-field`: a synthetic burrow of one 60° bend ending at
//!   (−0.425, 0.797, 0.073) m.

use nalgebra::UnitQuaternion;

use super::course::{build_course, ConnectorArc, CourseSpec, JunctionSpec, PipeNetwork, SegmentSpec};
use super::EnvironmentError;
use crate::geometry::Vec3;

pub const PRESET_NAMES: [&str; 4] = ["pipe3d-45", "branch2d-7", "climb45", "burrow-field"];

/// End of the `burrow-field` centerline relative to its entrance, m.
pub const BURROW_END: Vec3 = Vec3::new(-0.425, 0.797, 0.073);
pub const BURROW_TEMPERATURE_C: f64 = 17.2;
pub const BURROW_HUMIDITY_PCT: f64 = 39.4;

const PIPE3D_DIAMETER: f64 = 0.05;
const PIPE3D_LENGTH: f64 = 0.2;
const BRANCH_DIAMETER: f64 = 0.053;
const BRANCH_LINK: f64 = 0.15;
const BRANCH_ENTRY: f64 = 0.075;
const BURROW_DIAMETER: f64 = 0.05;
const BURROW_BEND_RADIUS: f64 = 0.15;
const BURROW_BEND_DEG: f64 = 60.0;

fn segment(id: &str, start: Vec3, end: Vec3, diameter: f64) -> SegmentSpec {
    SegmentSpec {
        id: id.to_string(),
        start,
        end,
        diameter,
    }
}

fn junction(id: &str, position: Vec3, incoming: &str, branches: &[(&str, f64)]) -> JunctionSpec {
    JunctionSpec {
        id: id.to_string(),
        position,
        incoming: incoming.to_string(),
        branch_ids: branches.iter().map(|(b, _)| b.to_string()).collect(),
        branch_angles: branches.iter().map(|(_, a)| *a).collect(),
        connector_radius: None,
    }
}

/// Direction reached by turning `t` by `deg` toward the unit vector `toward`.
fn turn(t: &Vec3, toward: &Vec3, deg: f64) -> Vec3 {
    let a = deg.to_radians();
    (t * a.cos() + toward * a.sin()).normalize()
}

fn arc_radius(connector_radius: Option<f64>, diameter: f64) -> f64 {
    connector_radius.unwrap_or(diameter)
}

#[derive(Debug, Clone, Copy)]
enum Turn {
    Left,
    Right,
    Up,
    Down,
}

pub fn pipe3d_45_spec(connector_radius: Option<f64>) -> CourseSpec {
    let turns = [Turn::Left, Turn::Up, Turn::Right, Turn::Down, Turn::Left];
    let radius = arc_radius(connector_radius, PIPE3D_DIAMETER);
    let mut segments = Vec::new();
    let mut junctions = Vec::new();
    let mut start = Vec3::zeros();
    let mut t = Vec3::x();
    let mut up = Vec3::z();
    for k in 0..6 {
        let id = format!("s{}", k + 1);
        let end = start + t * PIPE3D_LENGTH;
        segments.push(segment(&id, start, end, PIPE3D_DIAMETER));
        if k == 5 {
            break;
        }
        let left = up.cross(&t);
        let toward = match turns[k] {
            Turn::Left => left,
            Turn::Right => -left,
            Turn::Up => up,
            Turn::Down => -up,
        };
        let t_out = turn(&t, &toward, 45.0);
        let next = format!("s{}", k + 2);
        junctions.push(junction(&format!("c{}", k + 1), end, &id, &[(&next, 45.0)]));
        let arc = ConnectorArc::new(end, t, t_out, radius);
        if let Some(q) = UnitQuaternion::rotation_between(&t, &t_out) {
            up = (q * up).normalize();
        }
        start = arc.end();
        t = t_out;
    }
    CourseSpec {
        connector_radius,
        segments,
        junctions,
        entry: "s1".into(),
    }
}

pub fn branch2d_7_spec(connector_radius: Option<f64>) -> CourseSpec {
    let radius = arc_radius(connector_radius, BRANCH_DIAMETER);
    let mut segments = vec![segment(
        "entry",
        Vec3::zeros(),
        Vec3::x() * BRANCH_ENTRY,
        BRANCH_DIAMETER,
    )];
    let mut junctions = Vec::new();
    let mut incoming = "entry".to_string();
    let mut pos = Vec3::x() * BRANCH_ENTRY;
    let mut t = Vec3::x();
    for k in 1..=7 {
        let stub = format!("f{k}");
        segments.push(segment(&stub, pos, pos + t * BRANCH_LINK, BRANCH_DIAMETER));
        let right = t.cross(&Vec3::z());
        let t_out = turn(&t, &right, 45.0);
        let arc = ConnectorArc::new(pos, t, t_out, radius);
        let link = if k == 7 { "exit".to_string() } else { format!("r{k}") };
        let end = arc.end() + t_out * BRANCH_LINK;
        segments.push(segment(&link, arc.end(), end, BRANCH_DIAMETER));
        junctions.push(junction(
            &format!("j{k}"),
            pos,
            &incoming,
            &[(&stub, 0.0), (&link, 45.0)],
        ));
        incoming = link;
        pos = end;
        t = t_out;
    }
    CourseSpec {
        connector_radius,
        segments,
        junctions,
        entry: "entry".into(),
    }
}

pub fn climb45_spec(connector_radius: Option<f64>) -> CourseSpec {
    let radius = arc_radius(connector_radius, BRANCH_DIAMETER);
    let j = Vec3::new(0.3, 0.0, 0.0);
    let t_up = turn(&Vec3::x(), &Vec3::z(), 45.0);
    let arc = ConnectorArc::new(j, Vec3::x(), t_up, radius);
    CourseSpec {
        connector_radius,
        segments: vec![
            segment("entry", Vec3::zeros(), j, BRANCH_DIAMETER),
            segment("forward", j, j + Vec3::x() * 0.3, BRANCH_DIAMETER),
            segment("up", arc.end(), arc.end() + t_up * 0.3, BRANCH_DIAMETER),
        ],
        junctions: vec![junction("j", j, "entry", &[("forward", 0.0), ("up", 45.0)])],
        entry: "entry".into(),
    }
}

/// Straight run, one bend, straight run; the run lengths are solved so the
/// far end lands exactly on [`BURROW_END`].
pub fn burrow_field_spec() -> CourseSpec {
    let d_a = Vec3::new(0.1, 1.0, 0.15).normalize();
    let phi = BURROW_BEND_DEG.to_radians();
    let r = BURROW_BEND_RADIUS;
    let e = BURROW_END;
    let u = (e - d_a * e.dot(&d_a)).normalize();
    let l2 = (e.dot(&u) - r * (1.0 - phi.cos())) / phi.sin();
    let l1 = e.dot(&d_a) - r * phi.sin() - l2 * phi.cos();
    let bend = d_a * l1;
    let t_out = d_a * phi.cos() + u * phi.sin();
    let arc = ConnectorArc::new(bend, d_a, t_out, r);
    CourseSpec {
        connector_radius: Some(r),
        segments: vec![
            segment("tunnel-a", Vec3::zeros(), bend, BURROW_DIAMETER),
            segment("tunnel-b", arc.end(), arc.end() + t_out * l2, BURROW_DIAMETER),
        ],
        junctions: vec![junction("bend", bend, "tunnel-a", &[("tunnel-b", BURROW_BEND_DEG)])],
        entry: "tunnel-a".into(),
    }
}

pub fn pipe3d_45(connector_radius: Option<f64>) -> Result<PipeNetwork, EnvironmentError> {
    build_course(&pipe3d_45_spec(connector_radius))
}

pub fn branch2d_7(connector_radius: Option<f64>) -> Result<PipeNetwork, EnvironmentError> {
    build_course(&branch2d_7_spec(connector_radius))
}

pub fn climb45(connector_radius: Option<f64>) -> Result<PipeNetwork, EnvironmentError> {
    build_course(&climb45_spec(connector_radius))
}

pub fn burrow_field() -> Result<PipeNetwork, EnvironmentError> {
    build_course(&burrow_field_spec())
}

pub fn spec_by_name(name: &str) -> Result<CourseSpec, EnvironmentError> {
    match name {
        "pipe3d-45" => Ok(pipe3d_45_spec(None)),
        "branch2d-7" => Ok(branch2d_7_spec(None)),
        "climb45" => Ok(climb45_spec(None)),
        "burrow-field" => Ok(burrow_field_spec()),
        other => Err(EnvironmentError::UnknownPreset(other.to_string())),
    }
}

pub fn by_name(name: &str) -> Result<PipeNetwork, EnvironmentError> {
    build_course(&spec_by_name(name)?)
}

#[cfg(test)]
mod tests {
    use super::super::route::centerline;
    use super::*;

    #[test]
    fn all_presets_build() {
        for name in PRESET_NAMES {
            by_name(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(matches!(by_name("maze"), Err(EnvironmentError::UnknownPreset(_))));
    }

    #[test]
    fn pipe3d_structure() {
        let net = pipe3d_45(None).unwrap();
        assert_eq!(net.segments.len(), 6);
        assert_eq!(net.junctions.len(), 5);
        let arcs = 5.0 * PIPE3D_DIAMETER * std::f64::consts::FRAC_PI_4;
        let route = centerline(&net, &[]).unwrap();
        assert!((route.length() - (1.2 + arcs)).abs() < 1e-9);
        let kinked = pipe3d_45(Some(0.0)).unwrap();
        let route = centerline(&kinked, &[]).unwrap();
        assert_eq!(route.to_polyline(1e-8).len(), 7);
        assert!((route.length() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn branch2d_turns_accumulate() {
        let net = branch2d_7(None).unwrap();
        let route = centerline(&net, &[1; 7]).unwrap();
        let t0 = route.tangent_at(0.0);
        let t1 = route.tangent_at(route.length());
        // heading after seven right turns, measured clockwise in the plane
        let mut turned = 0.0;
        let mut prev = t0;
        for i in 1..=2000 {
            let t = route.tangent_at(route.length() * i as f64 / 2000.0);
            turned += -(prev.x * t.y - prev.y * t.x).atan2(prev.dot(&t));
            prev = t;
        }
        assert!((turned.to_degrees() - 315.0).abs() < 1e-6, "{}", turned.to_degrees());
        assert!((t1 - turn(&Vec3::x(), &Vec3::y(), 45.0)).norm() < 1e-9);
        assert_eq!(net.segments[route.segments()[7]].id, "exit");
    }

    #[test]
    fn burrow_end_is_exact() {
        let net = burrow_field().unwrap();
        let route = centerline(&net, &[]).unwrap();
        assert!((route.point_at(route.length()) - BURROW_END).norm() < 1e-12);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(pipe3d_45(None).unwrap(), pipe3d_45(None).unwrap());
        let a = serde_json::to_string(&branch2d_7(None).unwrap()).unwrap();
        let b = serde_json::to_string(&branch2d_7(None).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
