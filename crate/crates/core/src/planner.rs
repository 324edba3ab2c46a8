//! Next-best-view selection.
//!
//! A candidate pose is scored as
//!
//! ```text
//! U_view = λ1·U_G + U_R − λ2·U_path
//! U_G    = |unexplored cells visible from the pose|
//! U_R    = Σ_{visible voxels} (1 − R)
//! U_path = grid travel distance from the agent (metres)
//! ```
//!
//! In panoramic mode positions are scored omnidirectionally and the optical
//! axis is then chosen by summing per-bin utility over precomputed FoV bin
//! sets of a (finer) panoramic lattice.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::renderability::batch_renderability;
use crate::world_map::{CellState, DistanceField, PinholeProbe, View, ViewQuery, WorldMap};
use crate::{Error, Lattice, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    /// Frustum visibility with sampled optical axes.
    Pinhole,
    /// Omnidirectional position scoring plus FoV-bin direction selection.
    Panoramic,
    /// Baseline: a uniformly random reachable candidate and direction.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub lambda1: f64,
    /// Per metre of travel.
    pub lambda2: f64,
    pub candidate_count: usize,
    pub candidate_radius: f64,
    pub mode: PlannerMode,
    /// Half field of view of the camera, radians.
    pub half_fov_x: f64,
    pub half_fov_y: f64,
    /// Cone used for the panoramic FoV bin sets, radians.
    pub fov_half_angle: f64,
    pub max_range: f64,
    pub directions_per_position: usize,
    pub probe_resolution: u32,
    pub rng_seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let half = 30f64.to_radians();
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            candidate_count: 24,
            candidate_radius: 2.0,
            mode: PlannerMode::Panoramic,
            half_fov_x: half,
            half_fov_y: half,
            fov_half_angle: (half.tan().hypot(half.tan())).atan(),
            max_range: 6.0,
            directions_per_position: 8,
            probe_resolution: 128,
            rng_seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda1,
            self.lambda2,
            self.candidate_radius,
            self.half_fov_x,
            self.half_fov_y,
            self.fov_half_angle,
            self.max_range,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("planner parameters must be finite".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidConfig("planner weights must be non-negative".into()));
        }
        if self.candidate_count == 0 || self.directions_per_position == 0 {
            return Err(Error::InvalidConfig("candidate_count and directions_per_position must be >= 1".into()));
        }
        if self.probe_resolution == 0 || self.max_range <= 0.0 || self.candidate_radius < 0.0 {
            return Err(Error::InvalidConfig("probe resolution, max_range and radius must be positive".into()));
        }
        let quarter = std::f64::consts::FRAC_PI_2;
        if !(self.half_fov_x > 0.0 && self.half_fov_x < quarter && self.half_fov_y > 0.0 && self.half_fov_y < quarter) {
            return Err(Error::InvalidConfig("half FoV must lie in (0, pi/2)".into()));
        }
        Ok(())
    }

    pub fn probe(&self, axis: Vec3) -> PinholeProbe {
        let mut probe = PinholeProbe::new(axis, self.half_fov_x, self.half_fov_y, self.probe_resolution);
        probe.cone_half_angle = self.fov_half_angle;
        probe
    }
}

/// Utility terms of one candidate pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub position: Vec3,
    pub direction: Vec3,
    pub u_g: usize,
    pub u_r: f64,
    pub u_path: f64,
    pub u_view: f64,
}

/// `λ1·u_g + u_r − λ2·u_path`.
pub fn view_utility(lambda1: f64, lambda2: f64, u_g: usize, u_r: f64, u_path: f64) -> f64 {
    lambda1 * u_g as f64 + u_r - lambda2 * u_path
}

/// `Σ (1 − R)` over the visible voxels of a query.
pub fn render_utility(map: &WorldMap, query: &ViewQuery, position: &Vec3) -> f64 {
    let keys: Vec<_> = query.voxels.iter().map(|v| v.key).collect();
    batch_renderability(map, &keys, position)
        .into_iter()
        .map(|r| 1.0 - r)
        .sum()
}

/// Scores one pose. `Ok(None)` when the position cannot be reached from the
/// agent (such candidates are discarded). In pinhole mode `direction` is the
/// optical axis; in panoramic mode visibility is omnidirectional and the
/// direction is only recorded.
pub fn score_candidate(
    map: &WorldMap,
    pano: &Lattice,
    position: &Vec3,
    direction: &Vec3,
    cfg: &PlannerConfig,
    field: &DistanceField,
) -> Result<Option<CandidateScore>> {
    Ok(score_with_query(map, pano, position, direction, cfg, field)?.map(|(s, _)| s))
}

fn score_with_query(
    map: &WorldMap,
    pano: &Lattice,
    position: &Vec3,
    direction: &Vec3,
    cfg: &PlannerConfig,
    field: &DistanceField,
) -> Result<Option<(CandidateScore, ViewQuery)>> {
    let cell = map.require_free(position)?;
    let Some(u_path) = field.cost(map, &cell) else {
        return Ok(None);
    };
    let view = match cfg.mode {
        PlannerMode::Panoramic => View::Panoramic(pano),
        PlannerMode::Pinhole | PlannerMode::Random => View::Pinhole(cfg.probe(*direction)),
    };
    let query = map.query_view(position, &view, cfg.max_range)?;
    let u_g = query.unknown_cells.len();
    let u_r = render_utility(map, &query, position);
    let score = CandidateScore {
        position: *position,
        direction: *direction,
        u_g,
        u_r,
        u_path,
        u_view: view_utility(cfg.lambda1, cfg.lambda2, u_g, u_r, u_path),
    };
    Ok(Some((score, query)))
}

/// Per-bin base scores `s(k)` and FoV-aggregated scores `S(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionScores {
    pub base: Vec<f64>,
    pub aggregated: Vec<f64>,
}

impl DirectionScores {
    /// Index of the largest aggregated score, lowest index on ties.
    pub fn best_bin(&self) -> usize {
        argmax(&self.aggregated).unwrap_or(0)
    }
}

/// Bins each `(direction, score)` point to its nearest lattice bin and sums
/// over the lattice's FoV sets. Directions need not be normalised; zero
/// vectors are skipped. Panics if the lattice has no FoV sets.
pub fn aggregate_direction_scores(pano: &Lattice, points: &[(Vec3, f64)]) -> DirectionScores {
    let fov = pano
        .fov_sets()
        .expect("panoramic lattice needs FoV sets (Lattice::with_fov)");
    let mut base = vec![0.0; pano.len()];
    for (dir, score) in points {
        let norm = dir.norm();
        if norm > 0.0 {
            base[pano.nearest_bin_unchecked(&(dir / norm))] += score;
        }
    }
    let aggregated = fov
        .iter()
        .map(|set| set.iter().map(|&j| base[j]).sum())
        .collect();
    DirectionScores { base, aggregated }
}

fn direction_points(map: &WorldMap, query: &ViewQuery, position: &Vec3, lambda1: f64) -> Vec<(Vec3, f64)> {
    let keys: Vec<_> = query.voxels.iter().map(|v| v.key).collect();
    let rs = batch_renderability(map, &keys, position);
    let mut points: Vec<(Vec3, f64)> = query
        .unknown_cells
        .iter()
        .map(|c| (map.cell_center(c) - position, lambda1))
        .collect();
    points.extend(
        query
            .voxels
            .iter()
            .zip(rs)
            .map(|(v, r)| (v.dir, 1.0 - r)),
    );
    points
}

/// Optical axis for a position from the unified `G ∪ V` point set.
#[derive(Debug, Clone)]
pub struct PanoramicChoice {
    pub bin: usize,
    pub axis: Vec3,
    pub scores: DirectionScores,
}

fn choose_direction(map: &WorldMap, pano: &Lattice, query: &ViewQuery, position: &Vec3, cfg: &PlannerConfig) -> Result<PanoramicChoice> {
    if query.unknown_cells.is_empty() && query.voxels.is_empty() {
        return Err(Error::SaturatedPose);
    }
    let points = direction_points(map, query, position, cfg.lambda1);
    let scores = aggregate_direction_scores(pano, &points);
    let bin = scores.best_bin();
    Ok(PanoramicChoice {
        bin,
        axis: pano.center(bin),
        scores,
    })
}

pub fn panoramic_direction(map: &WorldMap, pano: &Lattice, position: &Vec3, cfg: &PlannerConfig) -> Result<PanoramicChoice> {
    let query = map.query_view(position, &View::Panoramic(pano), cfg.max_range)?;
    choose_direction(map, pano, &query, position, cfg)
}

/// Uniformly distributed unit vector.
pub fn random_direction(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Candidate positions: centers of reachable free cells within
/// `candidate_radius` of the agent, `candidate_count` of them drawn uniformly
/// without replacement (all of them when fewer). Falls back to every
/// reachable free cell when none lie within the radius.
pub fn sample_candidates(
    map: &WorldMap,
    current: &Vec3,
    cfg: &PlannerConfig,
    field: &DistanceField,
    rng: &mut impl Rng,
) -> Result<Vec<Vec3>> {
    if map.cell_count(CellState::Free) == 0 {
        return Err(Error::NoFreeCells);
    }
    let reachable: Vec<usize> = (0..map.cells().len())
        .filter(|&i| map.cells()[i] == CellState::Free)
        .filter(|&i| field.steps(map, &map.cell_from_index(i)).is_some())
        .collect();
    let near: Vec<usize> = reachable
        .iter()
        .copied()
        .filter(|&i| (map.cell_center(&map.cell_from_index(i)) - current).norm() <= cfg.candidate_radius)
        .collect();
    let pool = if near.is_empty() { reachable } else { near };
    if pool.is_empty() {
        return Err(Error::NoFreeCells);
    }
    let chosen: Vec<usize> = if pool.len() <= cfg.candidate_count {
        pool
    } else {
        let mut picks: Vec<usize> = index::sample(rng, pool.len(), cfg.candidate_count)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picks.sort_unstable();
        picks
    };
    Ok(chosen
        .into_iter()
        .map(|i| map.cell_center(&map.cell_from_index(i)))
        .collect())
}

fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Output of one planning step.
#[derive(Debug, Clone)]
pub struct Decision {
    pub position: Vec3,
    pub direction: Vec3,
    /// Every reachable scored candidate, in generation order.
    pub candidates: Vec<CandidateScore>,
    pub chosen: usize,
    pub discarded: usize,
}

/// Picks the next pose for an agent at `current`.
pub fn select_nbv(
    map: &WorldMap,
    pano: &Lattice,
    current: &Vec3,
    cfg: &PlannerConfig,
    rng: &mut impl Rng,
) -> Result<Decision> {
    let field = map.distance_field(current)?;
    let positions = sample_candidates(map, current, cfg, &field, rng)?;

    let poses: Vec<(Vec3, Vec3)> = match cfg.mode {
        PlannerMode::Pinhole => positions
            .iter()
            .flat_map(|p| (0..cfg.directions_per_position).map(|_| (*p, random_direction(rng))).collect::<Vec<_>>())
            .collect(),
        PlannerMode::Panoramic => positions.iter().map(|p| (*p, Vec3::zeros())).collect(),
        PlannerMode::Random => positions.iter().map(|p| (*p, random_direction(rng))).collect(),
    };

    if cfg.mode == PlannerMode::Random {
        let reachable: Vec<&(Vec3, Vec3)> = poses
            .iter()
            .filter(|(p, _)| field.cost(map, &map.cell_key(p)).is_some())
            .collect();
        if reachable.is_empty() {
            return Err(Error::AllCandidatesUnreachable);
        }
        let candidates: Vec<CandidateScore> = reachable
            .iter()
            .map(|(p, d)| CandidateScore {
                position: *p,
                direction: *d,
                u_g: 0,
                u_r: 0.0,
                u_path: field.cost(map, &map.cell_key(p)).unwrap(),
                u_view: rng.gen(),
            })
            .collect();
        let chosen = argmax(&candidates.iter().map(|c| c.u_view).collect::<Vec<_>>()).unwrap();
        return Ok(Decision {
            position: candidates[chosen].position,
            direction: candidates[chosen].direction,
            discarded: poses.len() - candidates.len(),
            candidates,
            chosen,
        });
    }

    let scored: Vec<Option<(CandidateScore, ViewQuery)>> = poses
        .par_iter()
        .map(|(p, d)| score_with_query(map, pano, p, d, cfg, &field))
        .collect::<Result<_>>()?;
    let discarded = scored.iter().filter(|s| s.is_none()).count();
    let (mut candidates, queries): (Vec<CandidateScore>, Vec<ViewQuery>) = scored.into_iter().flatten().unzip();
    let chosen = argmax(&candidates.iter().map(|c| c.u_view).collect::<Vec<_>>())
        .ok_or(Error::AllCandidatesUnreachable)?;

    if cfg.mode == PlannerMode::Panoramic {
        let position = candidates[chosen].position;
        let choice = choose_direction(map, pano, &queries[chosen], &position, cfg)?;
        candidates[chosen].direction = choice.axis;
    }
    Ok(Decision {
        position: candidates[chosen].position,
        direction: candidates[chosen].direction,
        candidates,
        chosen,
        discarded,
    })
}
