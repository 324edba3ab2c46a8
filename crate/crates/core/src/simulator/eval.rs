//! Novel-view evaluation: per-view renderability against the error of a
//! map-based colour predictor.

use rayon::prelude::*;

use super::{render_with_hits, Pose, Scene};
use crate::renderability::batch_renderability;
use crate::world_map::{Intrinsics, WorldMap};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewEval {
    pub pose: Pose,
    /// Distinct scene voxels hit by the view's pixels.
    pub visible: usize,
    pub mean_r: f64,
    pub mean_deficit: f64,
    pub mse: f64,
    /// `−10·log10(mse)`; `None` when the prediction is exact.
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub views: Vec<ViewEval>,
    /// Rank correlation of `mean_deficit` with `mse` over views that see at
    /// least one voxel; `None` when undefined.
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub mean_mse: f64,
}

/// Renders each test pose, predicts every hit pixel as the Welford mean of
/// its voxel (background when unobserved or missed) and scores the view.
pub fn eval_novel_views(scene: &Scene, map: &WorldMap, poses: &[Pose], intrinsics: &Intrinsics) -> Result<EvalReport> {
    if poses.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if map.config().bounds.min != scene.bounds().min || map.voxel_size() != scene.voxel_size() {
        return Err(Error::InvalidConfig("map and scene voxel grids are not aligned".into()));
    }
    let views: Vec<ViewEval> = poses
        .par_iter()
        .map(|pose| {
            let (frame, hits) = render_with_hits(scene, &pose.isometry(), intrinsics)?;
            let mut sq = 0.0;
            for (gt, hit) in frame.rgb.iter().zip(&hits) {
                let pred = hit
                    .and_then(|k| map.stats(&k))
                    .map_or(scene.background(), |s| s.mean());
                sq += (pred - gt).norm_squared();
            }
            let mse = sq / (3 * hits.len()) as f64;
            let mut keys: Vec<_> = hits.iter().flatten().copied().collect();
            keys.sort_unstable();
            keys.dedup();
            let rs = batch_renderability(map, &keys, &pose.position);
            let mean_r = if rs.is_empty() {
                0.0
            } else {
                rs.iter().sum::<f64>() / rs.len() as f64
            };
            Ok(ViewEval {
                pose: *pose,
                visible: keys.len(),
                mean_r,
                mean_deficit: 1.0 - mean_r,
                mse,
                psnr: (mse > 0.0).then(|| -10.0 * mse.log10()),
            })
        })
        .collect::<Result<_>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) = views
        .iter()
        .filter(|v| v.visible > 0)
        .map(|v| (v.mean_deficit, v.mse))
        .unzip();
    let mean_mse = views.iter().map(|v| v.mse).sum::<f64>() / views.len() as f64;
    Ok(EvalReport {
        spearman: spearman(&x, &y),
        pearson: pearson(&x, &y),
        views,
        mean_mse,
    })
}

pub const AXIS_DIRECTIONS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

/// Regular grid of positions with spacing `spacing`, centered in the
/// bounds, keeping those with no scene voxel within `clearance`; six
/// axis-aligned cameras per position.
pub fn test_pose_grid(scene: &Scene, spacing: f64, clearance: f64) -> Vec<Pose> {
    let b = scene.bounds();
    let ext = b.extent();
    let axis = |a: usize| -> Vec<f64> {
        let n = ((ext[a] / spacing).floor() as usize).max(1);
        let offset = (ext[a] - (n - 1) as f64 * spacing) / 2.0;
        (0..n).map(|i| b.min[a] + offset + i as f64 * spacing).collect()
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    let mut poses = Vec::new();
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                let p = Vec3::new(x, y, z);
                if !scene.is_free(&p) || scene.clearance(&p, clearance).is_some() {
                    continue;
                }
                for d in AXIS_DIRECTIONS {
                    poses.push(Pose {
                        position: p,
                        direction: Vec3::from(d),
                    });
                }
            }
        }
    }
    poses
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Ranks starting at 1; ties share their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}
