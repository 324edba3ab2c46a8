//! Closed-loop capture: render, ingest, plan, move.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{render_rgbd, Pose, Scene};
use crate::planner::{select_nbv, Decision, PlannerConfig};
use crate::renderability::renderability;
use crate::world_map::{Intrinsics, IngestReport, WorldMap};
use crate::{Error, Lattice, LatticeSpec, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_views: usize,
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub planner: PlannerConfig,
    pub budget: Budget,
    pub intrinsics: Intrinsics,
    /// Defaults to the scene start looking along +x.
    pub start: Option<Pose>,
    /// Capture at every m-th cell of each travelled path; 0 captures only at
    /// the selected poses.
    pub waypoint_every: usize,
    pub voxel_bins: usize,
    /// Panoramic lattice resolution, radians.
    pub pano_resolution: f64,
}

impl EpisodeConfig {
    pub fn new(planner: PlannerConfig, max_views: usize) -> Self {
        Self {
            planner,
            budget: Budget {
                max_views,
                max_seconds: None,
            },
            intrinsics: Intrinsics::from_fov(64, 64, 60f64.to_radians(), 60f64.to_radians()),
            start: None,
            waypoint_every: 0,
            voxel_bins: 64,
            pano_resolution: 10f64.to_radians(),
        }
    }
}

/// One planning call.
#[derive(Debug, Clone)]
pub struct PlanLog {
    /// Number of frames captured before planning.
    pub step: usize,
    pub seconds: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    /// Fraction of scene surface voxels with statistics in the map.
    pub coverage: f64,
    /// Mean R over scene surface voxels, each queried head-on along its
    /// outward normal from 1 m.
    pub mean_frontal_r: f64,
    pub mean_plan_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub trajectory: Vec<Pose>,
    pub frames_captured: usize,
    pub ingests: Vec<IngestReport>,
    pub plans: Vec<PlanLog>,
    /// Set when planning failed and the episode ended early.
    pub stalled: Option<String>,
    pub metrics: EpisodeMetrics,
    pub map: WorldMap,
}

/// Panoramic lattice with FoV sets for the planner configuration.
pub fn panoramic_lattice(resolution: f64, cfg: &PlannerConfig) -> Result<Lattice> {
    Lattice::build(LatticeSpec::Resolution(resolution))?.with_fov(cfg.fov_half_angle)
}

pub fn run_episode(scene: &Scene, cfg: &EpisodeConfig) -> Result<EpisodeResult> {
    cfg.planner.validate()?;
    if cfg.budget.max_views == 0 {
        return Err(Error::InvalidConfig("max_views must be >= 1".into()));
    }
    let mut map_cfg = scene.map_config();
    map_cfg.voxel_lattice = LatticeSpec::Bins(cfg.voxel_bins);
    let mut map = WorldMap::new(map_cfg)?;
    let pano = panoramic_lattice(cfg.pano_resolution, &cfg.planner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.planner.rng_seed);
    let clock = Instant::now();

    let mut pose = cfg.start.unwrap_or(Pose {
        position: scene.start(),
        direction: Vec3::x(),
    });
    let mut trajectory = Vec::new();
    let mut ingests = Vec::new();
    let mut plans = Vec::new();
    let mut stalled = None;

    let out_of_budget = |n: usize| {
        n >= cfg.budget.max_views
            || cfg
                .budget
                .max_seconds
                .is_some_and(|s| clock.elapsed().as_secs_f64() >= s)
    };

    let mut capture = |map: &mut WorldMap, pose: Pose, trajectory: &mut Vec<Pose>| -> Result<()> {
        let frame = render_rgbd(scene, &pose.isometry(), &cfg.intrinsics)?;
        ingests.push(map.ingest_frame(&frame)?);
        trajectory.push(pose);
        Ok(())
    };

    capture(&mut map, pose, &mut trajectory)?;
    while !out_of_budget(trajectory.len()) {
        let t0 = Instant::now();
        let decision = match select_nbv(&map, &pano, &pose.position, &cfg.planner, &mut rng) {
            Ok(d) => d,
            Err(e) => {
                stalled = Some(e.to_string());
                break;
            }
        };
        let seconds = t0.elapsed().as_secs_f64();
        let next = Pose {
            position: decision.position,
            direction: decision.direction,
        };
        plans.push(PlanLog {
            step: trajectory.len(),
            seconds,
            decision,
        });
        if cfg.waypoint_every > 0 {
            let path = map
                .shortest_path(&pose.position, &next.position)?
                .ok_or(Error::AllCandidatesUnreachable)?;
            let inner = path.len().saturating_sub(1);
            for cell in path.iter().take(inner).skip(1).step_by(cfg.waypoint_every) {
                if out_of_budget(trajectory.len()) {
                    break;
                }
                let wp = Pose {
                    position: map.cell_center(cell),
                    direction: next.direction,
                };
                capture(&mut map, wp, &mut trajectory)?;
            }
            if out_of_budget(trajectory.len()) {
                break;
            }
        }
        pose = next;
        capture(&mut map, pose, &mut trajectory)?;
    }

    let metrics = episode_metrics(scene, &map, &plans);
    Ok(EpisodeResult {
        frames_captured: trajectory.len(),
        trajectory,
        ingests,
        plans,
        stalled,
        metrics,
        map,
    })
}

pub fn episode_metrics(scene: &Scene, map: &WorldMap, plans: &[PlanLog]) -> EpisodeMetrics {
    let mut observed = 0usize;
    let mut r_sum = 0.0;
    let mut total = 0usize;
    for (key, _) in scene.voxels() {
        let Some(normal) = scene.exposed_normal(key) else {
            continue;
        };
        total += 1;
        if let Some(stats) = map.stats(key) {
            observed += 1;
            r_sum += renderability(stats, map.lattice(), &-normal, 1.0)
                .map(|s| s.r)
                .unwrap_or(0.0);
        }
    }
    let mean_plan_seconds = if plans.is_empty() {
        0.0
    } else {
        plans.iter().map(|p| p.seconds).sum::<f64>() / plans.len() as f64
    };
    EpisodeMetrics {
        coverage: if total == 0 { 0.0 } else { observed as f64 / total as f64 },
        mean_frontal_r: if total == 0 { 0.0 } else { r_sum / total as f64 },
        mean_plan_seconds,
    }
}
