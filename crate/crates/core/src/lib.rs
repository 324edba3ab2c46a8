//! Closed-form renderability scoring over per-voxel observation statistics.
//!
//! The crate keeps a constant-size record per surface voxel (visited viewing
//! direction bins, Welford colour moments, best observed resolution) and turns
//! it into a score in `[0, 1]` for any query viewpoint. On top of that sit a
//! next-best-view planner and a small synthetic RGB-D world used to exercise
//! the whole loop end to end.
//!
//! Module map:
//!
//! * [`fibsphere`]: Fibonacci lattice on the unit sphere, nearest-bin lookup, FoV bin sets.
//! * [`voxel_stats`]: per-voxel online state and the appearance-noise score.
//! * [`renderability`]: bias, noise and resolution factors and their product.
//! * [`world_map`]: voxel-statistics map, coarse occupancy grid, visibility and path queries.
//! * [`planner`]: candidate utilities, next-best-view selection, panoramic direction choice.
//! * [`simulator`]: synthetic scenes, RGB-D renderer, episodes and novel-view evaluation.
//! * [`oracle`]: full-history reference implementations used to validate the above.
//! * [`workload`]: synthetic latency and memory workloads.

pub mod error;
pub mod fibsphere;
pub mod oracle;
pub mod planner;
pub mod renderability;
pub mod simulator;
pub mod voxel_stats;
pub mod workload;
pub mod world_map;

pub use error::{Error, Result};
pub use fibsphere::{Lattice, LatticeSpec};
pub use planner::{CandidateScore, PlannerConfig, PlannerMode};
pub use renderability::{BiasResult, RenderabilityScore};
pub use voxel_stats::VoxelStats;
pub use world_map::{CellState, Frame, Intrinsics, MapConfig, WorldMap};

/// Double precision 3-vector used for directions, positions and colours.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Tolerance on `‖dir‖ = 1` for direction inputs.
pub const UNIT_TOLERANCE: f64 = 1e-6;

pub(crate) fn check_unit(dir: &Vec3) -> Result<()> {
    let norm = dir.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitDirection { norm });
    }
    Ok(())
}
