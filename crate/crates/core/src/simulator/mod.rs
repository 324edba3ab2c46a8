//! Synthetic ground truth: voxel scenes, an RGB-D renderer, closed-loop
//! capture episodes and novel-view evaluation.

mod episode;
mod eval;
mod render;
mod scene;

use nalgebra::Isometry3;

use crate::world_map::look_at;
use crate::Vec3;

pub use episode::{episode_metrics, panoramic_lattice, run_episode, Budget, EpisodeConfig, EpisodeMetrics, EpisodeResult, PlanLog};
pub use eval::{eval_novel_views, pearson, ranks, spearman, test_pose_grid, EvalReport, ViewEval, AXIS_DIRECTIONS};
pub use render::{cast, render_rgbd, render_with_hits};
pub use scene::{build_scene, Material, Scene, PRESETS};

/// Camera position and optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub direction: Vec3,
}

impl Pose {
    pub fn isometry(&self) -> Isometry3<f64> {
        look_at(self.position, &self.direction)
    }
}
