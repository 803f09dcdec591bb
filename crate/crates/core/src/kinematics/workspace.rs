//! Reachable tip surface of the active joint and the characterization sweep.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{effective_radius, rot_zyx, DeviceGeometry, KinematicsError};
use crate::geometry::Vec3;

const ANGLE_EPS: f64 = 1e-12;

/// Unit growth direction of frame {3} in frame {2} for active angles
/// `(θ₃, β₃)` with no twist: `Ry(β)·Rx(θ)·ẑ`.
pub fn tip_direction(theta: f64, beta: f64) -> Vec3 {
    rot_zyx(0.0, beta, theta) * Vec3::z()
}

/// Angle between `p` and the +z axis, radians.
pub fn polar_angle(p: &Vec3) -> f64 {
    (p.z / p.norm()).clamp(-1.0, 1.0).acos()
}

/// `(θ, β)` whose [`tip_direction`] is the unit vector `d` (`d.z > 0`).
fn angles_from_direction(d: &Vec3) -> (f64, f64) {
    ((-d.y).clamp(-1.0, 1.0).asin(), d.x.atan2(d.z))
}

/// `|measured − theoretical| / |theoretical|`, in percent.
pub fn percentage_error(measured: f64, theoretical: f64) -> Result<f64, KinematicsError> {
    if theoretical == 0.0 {
        return Err(KinematicsError::ZeroReference);
    }
    Ok((measured - theoretical).abs() / theoretical.abs() * 100.0)
}

/// Reachable set of the active joint: the tip direction stays within
/// `alpha_max` of the growth axis and never bends downward (`β₃ ≥ 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub alpha_max: f64,
}

impl Workspace {
    pub fn new(geom: &DeviceGeometry) -> Self {
        Self {
            alpha_max: geom.alpha_max(),
        }
    }

    /// Largest lateral angle, reached at `β₃ = 0`.
    pub fn theta_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn contains(&self, theta: f64, beta: f64) -> bool {
        beta >= -ANGLE_EPS && polar_angle(&tip_direction(theta, beta)) <= self.alpha_max + ANGLE_EPS
    }

    /// Nearest reachable angles: negative elevation is cut to zero, then the
    /// direction is pulled back onto the cone along its azimuth.
    pub fn clamp(&self, theta: f64, beta: f64) -> (f64, f64) {
        let beta = beta.max(0.0);
        let d = tip_direction(theta, beta);
        if polar_angle(&d) <= self.alpha_max {
            return (theta, beta);
        }
        let mut azimuth = d.y.atan2(d.x);
        // the reachable half of the cone has x ≥ 0
        if d.x < 0.0 {
            azimuth = if d.y < 0.0 { -FRAC_PI_2 } else { FRAC_PI_2 };
        }
        let (sa, ca) = self.alpha_max.sin_cos();
        let edge = Vec3::new(sa * azimuth.cos(), sa * azimuth.sin(), ca);
        angles_from_direction(&edge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSample {
    pub theta: f64,
    pub beta: f64,
    /// Tip position in frame {2}.
    pub position: Vec3,
}

impl WorkspaceSample {
    fn at(theta: f64, beta: f64, r_eff: f64) -> Self {
        Self {
            theta,
            beta,
            position: tip_direction(theta, beta) * r_eff,
        }
    }
}

fn boundary_arc(alpha: f64, count: usize, r_eff: f64) -> Vec<WorkspaceSample> {
    let (sa, ca) = alpha.sin_cos();
    (0..=count)
        .map(|i| {
            // azimuth measured from the up axis, sweeping right to left
            let psi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / count as f64;
            let d = Vec3::new(sa * psi.cos(), sa * psi.sin(), ca);
            let (theta, beta) = angles_from_direction(&d);
            WorkspaceSample::at(theta, beta, r_eff)
        })
        .collect()
}

/// Tip positions over a `(θ₃, β₃)` grid of spacing `resolution` radians,
/// restricted to the reachable set, plus samples on its boundary arc.
pub fn workspace_surface(
    geom: &DeviceGeometry,
    resolution: f64,
) -> Result<Vec<WorkspaceSample>, KinematicsError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(KinematicsError::InvalidResolution(resolution));
    }
    geom.validate()?;
    let ws = Workspace::new(geom);
    let r_eff = effective_radius(geom);
    let n = (ws.alpha_max / resolution).ceil().max(1.0) as usize;
    let mut out = Vec::new();
    for j in 0..=n {
        let beta = ws.alpha_max * j as f64 / n as f64;
        for i in 0..=2 * n {
            let theta = -ws.alpha_max + ws.alpha_max * i as f64 / n as f64;
            if ws.contains(theta, beta) {
                out.push(WorkspaceSample::at(theta, beta, r_eff));
            }
        }
    }
    out.extend(boundary_arc(ws.alpha_max, 2 * n, r_eff));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Boundary,
    /// `β₃ = 0`, θ₃ from 0 to `+θ_max`.
    AlphaZeroLeft,
    /// `β₃ = 0`, θ₃ from 0 to `−θ_max`.
    AlphaZeroRight,
    ThetaZero,
    ThetaEqualsAlpha,
    ThetaEqualsMinusAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub kind: SweepKind,
    pub samples: Vec<WorkspaceSample>,
}

/// The six-trajectory characterization protocol: the boundary followed by
/// five lines through the neutral pose, each run out to the boundary.
pub fn characterization_sweep(
    geom: &DeviceGeometry,
    samples_per_line: usize,
) -> Result<Vec<Sweep>, KinematicsError> {
    geom.validate()?;
    let n = samples_per_line.max(2);
    let alpha = geom.alpha_max();
    let r_eff = effective_radius(geom);
    // θ = ±β meets the cone where cos²t = cos α
    let diagonal_end = alpha.cos().sqrt().acos();
    let line = |f: &dyn Fn(f64) -> (f64, f64), end: f64| -> Vec<WorkspaceSample> {
        (0..=n)
            .map(|i| {
                let (theta, beta) = f(end * i as f64 / n as f64);
                WorkspaceSample::at(theta, beta, r_eff)
            })
            .collect()
    };
    Ok(vec![
        Sweep {
            kind: SweepKind::Boundary,
            samples: boundary_arc(alpha, n, r_eff),
        },
        Sweep {
            kind: SweepKind::AlphaZeroLeft,
            samples: line(&|t| (t, 0.0), alpha),
        },
        Sweep {
            kind: SweepKind::AlphaZeroRight,
            samples: line(&|t| (-t, 0.0), alpha),
        },
        Sweep {
            kind: SweepKind::ThetaZero,
            samples: line(&|t| (0.0, t), alpha),
        },
        Sweep {
            kind: SweepKind::ThetaEqualsAlpha,
            samples: line(&|t| (t, t), diagonal_end),
        },
        Sweep {
            kind: SweepKind::ThetaEqualsMinusAlpha,
            samples: line(&|t| (-t, t), diagonal_end),
        },
    ])
}

/// Writes samples as `theta_rad,beta_rad,x,y,z`.
pub fn write_workspace_csv<W: Write>(writer: W, samples: &[WorkspaceSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["theta_rad", "beta_rad", "x", "y", "z"])?;
    for s in samples {
        w.write_record([
            s.theta.to_string(),
            s.beta.to_string(),
            s.position.x.to_string(),
            s.position.y.to_string(),
            s.position.z.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
