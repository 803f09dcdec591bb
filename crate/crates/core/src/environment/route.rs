use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::course::{ConnectorArc, PipeNetwork};
use super::EnvironmentError;
use crate::geometry::{closest_point_on_segment, Polyline, Vec3};

/// One piece of a centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Piece {
    Line {
        start: Vec3,
        end: Vec3,
        segment: usize,
    },
    /// Connector into `branch` of `junction`. A zero-radius arc is a kink.
    Arc {
        arc: ConnectorArc,
        junction: usize,
        branch: usize,
    },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match self {
            Piece::Line { start, end, .. } => (end - start).norm(),
            Piece::Arc { arc, .. } => arc.length(),
        }
    }

    fn point(&self, s: f64) -> Vec3 {
        match self {
            Piece::Line { start, end, .. } => {
                let len = (end - start).norm();
                start + (end - start) * (s / len).clamp(0.0, 1.0)
            }
            Piece::Arc { arc, .. } => {
                if arc.is_degenerate() {
                    arc.start
                } else {
                    arc.point((s / arc.radius).clamp(0.0, arc.angle))
                }
            }
        }
    }

    /// World-frame rotation accumulated from the start of the piece to `s`.
    fn turn(&self, s: f64) -> UnitQuaternion<f64> {
        match self {
            Piece::Line { .. } => UnitQuaternion::identity(),
            Piece::Arc { arc, .. } => {
                let psi = if arc.is_degenerate() {
                    arc.angle
                } else {
                    (s / arc.radius).clamp(0.0, arc.angle)
                };
                if psi == 0.0 {
                    return UnitQuaternion::identity();
                }
                UnitQuaternion::from_axis_angle(&Unit::new_normalize(arc.axis()), psi)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteJunction {
    pub junction: usize,
    pub branch: usize,
    /// Arc length at which the junction is reached.
    pub s: f64,
    pub position: Vec3,
}

/// Centerline of one path through a network, parameterised by arc length
/// from the entry. Carries a parallel-transported frame whose z axis is the
/// tangent and whose x axis starts as the projection of world up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pieces: Vec<Piece>,
    starts: Vec<f64>,
    frames: Vec<UnitQuaternion<f64>>,
    diameters: Vec<f64>,
    junctions: Vec<RouteJunction>,
    length: f64,
}

fn initial_frame(tangent: &Vec3) -> UnitQuaternion<f64> {
    let z = tangent.normalize();
    let mut x = Vec3::z() - z * z.z;
    if x.norm() < 1e-9 {
        x = Vec3::x() - z * z.x;
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

impl Route {
    /// Route covering only the entry segment.
    pub fn start(network: &PipeNetwork) -> Route {
        let seg = network.entry_segment();
        let piece = Piece::Line {
            start: seg.start,
            end: seg.end,
            segment: network.entry,
        };
        Route {
            pieces: vec![piece],
            starts: vec![0.0],
            frames: vec![initial_frame(&seg.axis())],
            diameters: vec![seg.diameter],
            junctions: Vec::new(),
            length: piece.length(),
        }
    }

    fn push(&mut self, piece: Piece, diameter: f64) {
        let last = self.pieces.len() - 1;
        let frame = self.pieces[last].turn(self.pieces[last].length()) * self.frames[last];
        self.starts.push(self.length);
        self.frames.push(frame);
        self.diameters.push(diameter);
        self.length += piece.length();
        self.pieces.push(piece);
    }

    /// Junction waiting at the end of the route, if any.
    pub fn pending_junction(&self, network: &PipeNetwork) -> Option<usize> {
        match self.pieces.last() {
            Some(Piece::Line { segment, .. }) => network.segments[*segment].end_junction,
            _ => None,
        }
    }

    /// Extends the route through `branch` of the pending junction.
    pub fn push_branch(&mut self, network: &PipeNetwork, branch: usize) -> Result<(), EnvironmentError> {
        let Some(ji) = self.pending_junction(network) else {
            return Err(EnvironmentError::InvalidSpec("route does not end at a junction".into()));
        };
        let junction = &network.junctions[ji];
        let Some(&seg_index) = junction.branches.get(branch) else {
            return Err(EnvironmentError::InvalidChoice {
                junction: junction.id.clone(),
                choice: branch,
            });
        };
        self.junctions.push(RouteJunction {
            junction: ji,
            branch,
            s: self.length,
            position: junction.position,
        });
        let arc = junction.arcs[branch];
        let incoming_d = network.segments[junction.incoming].diameter;
        if arc.angle > 0.0 {
            self.push(
                Piece::Arc {
                    arc,
                    junction: ji,
                    branch,
                },
                incoming_d,
            );
        }
        let seg = &network.segments[seg_index];
        self.push(
            Piece::Line {
                start: seg.start,
                end: seg.end,
                segment: seg_index,
            },
            seg.diameter,
        );
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Arc length at which each piece begins.
    pub fn piece_starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn junctions(&self) -> &[RouteJunction] {
        &self.junctions
    }

    /// Segment indices in traversal order.
    pub fn segments(&self) -> Vec<usize> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Line { segment, .. } => Some(*segment),
                _ => None,
            })
            .collect()
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length);
        // last piece starting at or before s, skipping zero-length kinks at s
        let i = self.starts.partition_point(|&x| x <= s).saturating_sub(1);
        (i, s - self.starts[i])
    }

    /// Centerline point at arc length `s`, clamped to the route.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let (i, local) = self.locate(s);
        self.pieces[i].point(local)
    }

    /// Transported frame at `s`; its z axis is the tangent.
    pub fn frame_at(&self, s: f64) -> UnitQuaternion<f64> {
        let (i, local) = self.locate(s);
        self.pieces[i].turn(local) * self.frames[i]
    }

    pub fn tangent_at(&self, s: f64) -> Vec3 {
        self.frame_at(s) * Vec3::z()
    }

    pub fn diameter_at(&self, s: f64) -> f64 {
        self.diameters[self.locate(s).0]
    }

    /// Polyline whose chords deviate from the arcs by at most `max_sagitta`.
    pub fn to_polyline(&self, max_sagitta: f64) -> Polyline {
        let mut pts: Vec<Vec3> = Vec::new();
        let push = |p: Vec3, pts: &mut Vec<Vec3>| {
            if pts.last().map_or(true, |q| (q - p).norm() > 1e-15) {
                pts.push(p);
            }
        };
        for piece in &self.pieces {
            match piece {
                Piece::Line { start, end, .. } => {
                    push(*start, &mut pts);
                    push(*end, &mut pts);
                }
                Piece::Arc { arc, .. } => {
                    if arc.is_degenerate() {
                        push(arc.start, &mut pts);
                        continue;
                    }
                    let ratio = (1.0 - max_sagitta.max(1e-15) / arc.radius).clamp(-1.0, 1.0);
                    let step = (2.0 * ratio.acos()).max(1e-6);
                    let n = (arc.angle / step).ceil().max(1.0) as usize;
                    for k in 0..=n {
                        push(arc.point(arc.angle * k as f64 / n as f64), &mut pts);
                    }
                }
            }
        }
        Polyline::new(pts)
    }
}

/// Centerline from the entry, taking `choices[k]` at the k-th junction met.
/// Junctions with a single branch may be left without a choice.
pub fn centerline(network: &PipeNetwork, choices: &[usize]) -> Result<Route, EnvironmentError> {
    let mut route = Route::start(network);
    let mut k = 0;
    while let Some(ji) = route.pending_junction(network) {
        let junction = &network.junctions[ji];
        let choice = match choices.get(k) {
            Some(&c) => c,
            None if junction.branches.len() == 1 => 0,
            None => return Err(EnvironmentError::MissingChoice(junction.id.clone())),
        };
        if choice >= junction.branches.len() {
            return Err(EnvironmentError::InvalidChoice {
                junction: junction.id.clone(),
                choice,
            });
        }
        route.push_branch(network, choice)?;
        k += 1;
    }
    Ok(route)
}

/// Result of a containment query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub inside: bool,
    /// Closest point on any segment axis or connector arc.
    pub nearest: Vec3,
    pub distance: f64,
}

impl PipeNetwork {
    /// Whether `p` lies within some pipe (segment or connector), i.e. within
    /// half a diameter of its axis.
    pub fn contains(&self, p: &Vec3) -> Containment {
        let mut best = Containment {
            inside: false,
            nearest: self.segments[self.entry].start,
            distance: f64::INFINITY,
        };
        let consider = |q: Vec3, diameter: f64, best: &mut Containment| {
            let d = (p - q).norm();
            if d <= 0.5 * diameter {
                best.inside = true;
            }
            if d < best.distance {
                best.distance = d;
                best.nearest = q;
            }
        };
        for seg in &self.segments {
            consider(closest_point_on_segment(p, &seg.start, &seg.end), seg.diameter, &mut best);
        }
        for j in &self.junctions {
            let d = self.segments[j.incoming].diameter;
            for arc in &j.arcs {
                consider(arc.closest_point(p), d, &mut best);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::super::presets;
    use super::*;

    #[test]
    fn frame_is_orthonormal_and_tangent() {
        let net = presets::pipe3d_45(None).unwrap();
        let route = centerline(&net, &[]).unwrap();
        for i in 0..=200 {
            let s = route.length() * i as f64 / 200.0;
            let q = route.frame_at(s);
            let t = route.tangent_at(s);
            let ds = 1e-6;
            let fd = (route.point_at((s + ds).min(route.length())) - route.point_at((s - ds).max(0.0)))
                .normalize();
            assert!((t - fd).norm() < 1e-4, "s={s}");
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn route_points_are_contained() {
        let net = presets::pipe3d_45(None).unwrap();
        let route = centerline(&net, &[]).unwrap();
        for i in 0..=500 {
            let p = route.point_at(route.length() * i as f64 / 500.0);
            let c = net.contains(&p);
            assert!(c.inside && c.distance < 1e-12);
        }
    }

    #[test]
    fn invalid_and_missing_choices() {
        let net = presets::branch2d_7(None).unwrap();
        assert!(matches!(
            centerline(&net, &[2]),
            Err(EnvironmentError::InvalidChoice { choice: 2, .. })
        ));
        assert!(matches!(centerline(&net, &[1]), Err(EnvironmentError::MissingChoice(_))));
    }
}
