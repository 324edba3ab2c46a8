//! Closed-form renderability `R = b · ε · γ` of one voxel for one query view.
//!
//! * `b`: directional support: the best alignment between the query
//!   direction and a visited bin center, squared when the query extrapolates
//!   beyond the visited directions.
//! * `ε`: appearance stability: the noise score `δ` raised to
//!   `κ(1 - b)`, so well-supported queries are barely penalised.
//! * `γ`: resolution gain: `min(1, ρ_max / ρ_s)^(1 - δb)` with `ρ = 1/depth`.
//!
//! All three factors and their product lie in `[0, 1]`. `0⁰ = 1` throughout.

use crate::fibsphere::CenterColumns;
use crate::voxel_stats::BinMask;
use crate::world_map::{VoxelKey, WorldMap};
use crate::{check_unit, Error, Lattice, Result, Vec3, VoxelStats};

/// Interpolation (query inside the visited support).
pub const KAPPA_INTERPOLATE: u8 = 1;
/// Extrapolation.
pub const KAPPA_EXTRAPOLATE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasResult {
    pub cos_theta: f64,
    pub kappa: u8,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderabilityScore {
    pub b: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub r: f64,
}

impl RenderabilityScore {
    pub const ZERO: RenderabilityScore = RenderabilityScore {
        b: 0.0,
        epsilon: 1.0,
        gamma: 0.0,
        r: 0.0,
    };
}

/// Orthonormal `(e1, e2)` spanning the tangent plane at `query`.
///
/// `e1` is Gram-Schmidt of the coordinate axis least aligned with `query`
/// (lowest axis index on ties), `e2 = query × e1`.
pub fn tangent_basis(query: &Vec3) -> (Vec3, Vec3) {
    let (ax, ay, az) = (query.x.abs(), query.y.abs(), query.z.abs());
    let axis = if ax <= ay && ax <= az {
        Vec3::x()
    } else if ay <= az {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = (axis - query * query.dot(&axis)).normalize();
    let e2 = query.cross(&e1);
    (e1, e2)
}

/// Inflation applied to the projected bounding box when classifying
/// against binned directions: `sin(bin_radius / 2)`.
pub fn extrapolation_margin(lattice: &Lattice) -> f64 {
    (lattice.bin_radius() / 2.0).sin()
}

// Projections of the query onto its own tangent basis are not exactly zero.
// Visited-bin count from which the fixed-cost sweep beats iterating set bits.
const DENSE_MIN_BINS: u32 = 16;

const PROJECTION_SLACK: f64 = 1e-12;

#[derive(Debug, Default, PartialEq)]
struct SupportBox {
    lo: [f64; 2],
    hi: [f64; 2],
    any: bool,
}

impl SupportBox {
    fn add(&mut self, p: [f64; 2]) {
        if !self.any {
            self.lo = p;
            self.hi = p;
            self.any = true;
            return;
        }
        for i in 0..2 {
            self.lo[i] = self.lo[i].min(p[i]);
            self.hi[i] = self.hi[i].max(p[i]);
        }
    }

    fn kappa(&self, margin: f64) -> u8 {
        let slack = margin + PROJECTION_SLACK;
        let inside = self.any
            && (0..2).all(|i| self.lo[i] - slack <= 0.0 && self.hi[i] + slack >= 0.0);
        if inside {
            KAPPA_INTERPOLATE
        } else {
            KAPPA_EXTRAPOLATE
        }
    }
}

/// Tangent-plane bounding-box test. Directions facing away from the query
/// (`⟨v, query⟩ <= 0`) are ignored; no remaining directions means
/// extrapolation.
pub fn classify_extrapolation<'a>(
    visited: impl IntoIterator<Item = &'a Vec3>,
    query: &Vec3,
    margin: f64,
) -> u8 {
    let (e1, e2) = tangent_basis(query);
    let mut bbox = SupportBox::default();
    for v in visited {
        if v.dot(query) > 0.0 {
            bbox.add([v.dot(&e1), v.dot(&e2)]);
        }
    }
    bbox.kappa(margin)
}

// Unit dot products carry a few ulps of rounding; an exact repeat should
// still read as full support.
fn snap_unit(c: f64) -> f64 {
    if c >= 1.0 - 4.0 * f64::EPSILON {
        1.0
    } else {
        c.max(0.0)
    }
}

// Max cosine over visited bins and the tangent-plane box of the front-facing ones.
fn support_sparse(mask: &BinMask, centers: &[Vec3], query: &Vec3, e1: &Vec3, e2: &Vec3) -> (f64, SupportBox) {
    let mut best = f64::NEG_INFINITY;
    let mut bbox = SupportBox::default();
    for k in mask.iter() {
        let q = &centers[k];
        let c = q.x * query.x + q.y * query.y + q.z * query.z;
        best = best.max(c);
        if c > 0.0 {
            bbox.add([q.x * e1.x + q.y * e1.y + q.z * e1.z, q.x * e2.x + q.y * e2.y + q.z * e2.z]);
        }
    }
    (best, bbox)
}

// Four mask bits to additive penalties: 0 for a visited bin, -inf otherwise.
const NIBBLE_PENALTY: [[f64; 4]; 16] = {
    let mut t = [[f64::NEG_INFINITY; 4]; 16];
    let mut n = 0;
    while n < 16 {
        let mut b = 0;
        while b < 4 {
            if (n >> b) & 1 == 1 {
                t[n][b] = 0.0;
            }
            b += 1;
        }
        n += 1;
    }
    t
};

// Same result as `support_sparse` from a fixed-cost, branch-free sweep over
// every bin, so query time does not depend on which bins have been visited.
// Unvisited or back-facing bins are pushed to ±inf instead of skipped.
fn support_dense(bits: u64, cols: &CenterColumns, query: &Vec3, e1: &Vec3, e2: &Vec3) -> (f64, SupportBox) {
    let mut pen = [0.0; 64];
    for j in 0..16 {
        pen[4 * j..4 * j + 4].copy_from_slice(&NIBBLE_PENALTY[((bits >> (4 * j)) & 15) as usize]);
    }
    let (inf, ninf) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut best = [ninf; 2];
    let (mut lo0, mut hi0, mut lo1, mut hi1) = ([inf; 2], [ninf; 2], [inf; 2], [ninf; 2]);
    for k in 0..64 {
        let (x, y, z) = (cols.x[k], cols.y[k], cols.z[k]);
        let c = x * query.x + y * query.y + z * query.z;
        let p0 = x * e1.x + y * e1.y + z * e1.z;
        let p1 = x * e2.x + y * e2.y + z * e2.z;
        let vc = c + pen[k];
        let fp = if c > 0.0 { pen[k] } else { ninf };
        let l = k & 1;
        best[l] = if vc > best[l] { vc } else { best[l] };
        lo0[l] = if p0 - fp < lo0[l] { p0 - fp } else { lo0[l] };
        hi0[l] = if p0 + fp > hi0[l] { p0 + fp } else { hi0[l] };
        lo1[l] = if p1 - fp < lo1[l] { p1 - fp } else { lo1[l] };
        hi1[l] = if p1 + fp > hi1[l] { p1 + fp } else { hi1[l] };
    }
    let lo = [lo0[0].min(lo0[1]), lo1[0].min(lo1[1])];
    let hi = [hi0[0].max(hi0[1]), hi1[0].max(hi1[1])];
    let bbox = if lo[0] <= hi[0] {
        SupportBox { lo, hi, any: true }
    } else {
        SupportBox::default()
    };
    (best[0].max(best[1]), bbox)
}

fn bias_unchecked(stats: &VoxelStats, lattice: &Lattice, margin: f64, query: &Vec3) -> BiasResult {
    let (e1, e2) = tangent_basis(query);
    let (best, bbox) = match (lattice.columns(), stats.mask()) {
        (Some(cols), BinMask::Compact(bits)) if bits.count_ones() >= DENSE_MIN_BINS => {
            support_dense(*bits, cols, query, &e1, &e2)
        }
        (_, mask) => support_sparse(mask, lattice.centers(), query, &e1, &e2),
    };
    if best == f64::NEG_INFINITY {
        return BiasResult {
            cos_theta: 0.0,
            kappa: KAPPA_EXTRAPOLATE,
            b: 0.0,
        };
    }
    let cos_theta = snap_unit(best);
    let kappa = bbox.kappa(margin);
    BiasResult {
        cos_theta,
        kappa,
        b: cos_theta.powi(i32::from(kappa)),
    }
}

/// Directional support of `stats` for a unit `query_dir` (camera to voxel).
pub fn bias(stats: &VoxelStats, lattice: &Lattice, query_dir: &Vec3) -> Result<BiasResult> {
    check_unit(query_dir)?;
    Ok(bias_unchecked(stats, lattice, extrapolation_margin(lattice), query_dir))
}

/// `ε = δ^(κ(1 - b))`.
pub fn epsilon(delta: f64, kappa: u8, b: f64) -> f64 {
    delta.powf(f64::from(kappa) * (1.0 - b))
}

/// `γ = min(1, ρ_max/ρ_s)^(1 - δb)` with `ρ_s = 1/query_depth`.
///
/// Unobserved stats (`ρ_max = 0`) and non-positive depths give 0.
pub fn resolution_gain(stats: &VoxelStats, query_depth: f64, delta: f64, b: f64) -> f64 {
    let rho_max = stats.rho_max();
    if rho_max <= 0.0 || !(query_depth > 0.0) {
        return 0.0;
    }
    let rho_s = 1.0 / query_depth;
    let ratio = if rho_s <= rho_max { 1.0 } else { rho_max / rho_s };
    ratio.powf(1.0 - delta * b)
}

/// Scores one voxel; `query_dir` is assumed unit, `query_depth` positive.
pub(crate) fn score_unchecked(
    stats: &VoxelStats,
    lattice: &Lattice,
    margin: f64,
    query_dir: &Vec3,
    query_depth: f64,
) -> RenderabilityScore {
    if !stats.is_observed() {
        return RenderabilityScore::ZERO;
    }
    let bias = bias_unchecked(stats, lattice, margin, query_dir);
    let delta = stats.delta();
    let epsilon = epsilon(delta, bias.kappa, bias.b);
    let gamma = resolution_gain(stats, query_depth, delta, bias.b);
    RenderabilityScore {
        b: bias.b,
        epsilon,
        gamma,
        r: bias.b * epsilon * gamma,
    }
}

/// Full renderability of `stats` seen along `query_dir` from `query_depth` metres.
pub fn renderability(
    stats: &VoxelStats,
    lattice: &Lattice,
    query_dir: &Vec3,
    query_depth: f64,
) -> Result<RenderabilityScore> {
    check_unit(query_dir)?;
    if !(query_depth.is_finite() && query_depth > 0.0) {
        return Err(Error::NonFiniteObservation("query depth"));
    }
    if stats.n_bins() != lattice.len() {
        return Err(Error::LatticeMismatch {
            left: stats.n_bins(),
            right: lattice.len(),
        });
    }
    Ok(score_unchecked(
        stats,
        lattice,
        extrapolation_margin(lattice),
        query_dir,
        query_depth,
    ))
}

/// `R` for each voxel as seen from `camera`. Missing voxels score 0; so does
/// a voxel whose center coincides with the camera.
pub fn batch_renderability(map: &WorldMap, voxel_ids: &[VoxelKey], camera: &Vec3) -> Vec<f64> {
    let lattice = map.lattice();
    let margin = extrapolation_margin(lattice);
    voxel_ids
        .iter()
        .map(|key| {
            let Some(stats) = map.stats(key) else {
                return 0.0;
            };
            let offset = map.voxel_center(key) - camera;
            let depth = offset.norm();
            if depth <= 0.0 {
                return 0.0;
            }
            score_unchecked(stats, lattice, margin, &(offset / depth), depth).r
        })
        .collect()
}
