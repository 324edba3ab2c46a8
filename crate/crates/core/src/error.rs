use thiserror::Error;

use crate::world_map::CellKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("direction is not unit length (norm = {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("FoV half-angle {0} rad is outside (0, pi/2]")]
    InvalidHalfAngle(f64),

    #[error("non-finite observation: {0}")]
    NonFiniteObservation(&'static str),

    #[error("lattice size mismatch: {left} vs {right} bins")]
    LatticeMismatch { left: usize, right: usize },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("position ({x:.3}, {y:.3}, {z:.3}) is outside the map bounds")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("cell {cell:?} is {state}, expected free")]
    NotFree { cell: CellKey, state: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no free cells available for candidate sampling")]
    NoFreeCells,

    #[error("pose is saturated: no unexplored cells or visible voxels")]
    SaturatedPose,

    #[error("all candidates are unreachable")]
    AllCandidatesUnreachable,

    #[error("camera position lies inside scene geometry")]
    InsideGeometry,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("unknown scene preset `{0}`")]
    UnknownPreset(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("malformed scene file (line {line}): {msg}")]
    SceneFormat { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
