//! Pipe networks and burrows the robot grows through.
//!
//! A [`PipeNetwork`] is a tree of straight cylindrical segments joined at
//! junctions. Each branch leaves its junction through a circular connector
//! arc (or a sharp kink when the connector radius is zero). A [`Route`] is the
//! centerline of one path through the tree.

mod burrow;
mod course;
pub mod presets;
mod route;

pub use burrow::{
    bending_angle_xy, reconstruct_burrow, write_burrow_csv, BurrowProfile, BurrowSummary,
    EnvironmentSample,
};
pub use course::{
    build_course, ConnectorArc, CourseSpec, Junction, JunctionSpec, PipeNetwork, PipeSegment,
    SegmentSpec,
};
pub use route::{centerline, Containment, Piece, Route, RouteJunction};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("segment `{0}` has non-positive length")]
    ZeroLengthSegment(String),
    #[error("segment `{id}` has invalid diameter {diameter}")]
    InvalidDiameter { id: String, diameter: f64 },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown segment id `{0}`")]
    UnknownSegment(String),
    #[error("junction `{0}` has no outgoing branch")]
    NoBranches(String),
    #[error("junction `{0}`: branch ids and angles differ in length")]
    BranchArity(String),
    #[error("junction `{junction}` is not at the end of its incoming segment")]
    MisplacedJunction { junction: String },
    #[error("junction `{junction}` branch `{branch}`: angle {angle}° outside [0°, 180°)")]
    AngleOutOfRange { junction: String, branch: String, angle: f64 },
    #[error("junction `{junction}` branch `{branch}`: axis angle {actual:.3}° differs from declared {declared:.3}°")]
    AngleMismatch {
        junction: String,
        branch: String,
        declared: f64,
        actual: f64,
    },
    #[error("segment `{0}` is disconnected from the network")]
    Disconnected(String),
    #[error("segment `{0}` is reachable along more than one path")]
    NotATree(String),
    #[error("segments `{0}` and `{1}` intersect")]
    SelfIntersecting(String, String),
    #[error("invalid branch choice {choice} at junction `{junction}`")]
    InvalidChoice { junction: String, choice: usize },
    #[error("junction `{0}` has several branches but no choice was given")]
    MissingChoice(String),
    #[error("unknown course preset `{0}`")]
    UnknownPreset(String),
    #[error("displacement has no x-y component")]
    ZeroProjection,
    #[error("streams are misaligned: {0}")]
    Misaligned(String),
    #[error("invalid course spec: {0}")]
    InvalidSpec(String),
}
