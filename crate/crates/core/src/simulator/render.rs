//! Ground-truth RGB-D rendering by voxel ray marching.

use nalgebra::Isometry3;
use rayon::prelude::*;

use super::Scene;
use crate::world_map::traverse::GridWalk;
use crate::world_map::{backproject, Frame, Intrinsics, VoxelKey};
use crate::{Error, Result, Vec3};

/// First occupied voxel along a unit ray and the range at which it is
/// entered. When the ray enters through an edge or corner, the voxel the
/// backprojected return falls in is reported if it is occupied, so a map
/// ingesting the range attributes the colour to the same voxel.
pub fn cast(scene: &Scene, origin: &Vec3, dir: &Vec3) -> Option<(VoxelKey, f64)> {
    let limit = scene.bounds().extent().norm() + scene.voxel_size();
    for c in GridWalk::new(&scene.bounds().min, scene.voxel_size(), origin, dir, limit) {
        let key = VoxelKey(c.cell);
        if !scene.in_grid(&key) {
            return None;
        }
        if scene.is_occupied(&key) {
            let resolved = scene.voxel_key(&backproject(origin, dir, c.t_enter, scene.voxel_size()));
            let key = if resolved != key && scene.is_occupied(&resolved) { resolved } else { key };
            return Some((key, c.t_enter));
        }
    }
    None
}

fn check_pose(scene: &Scene, pose: &Isometry3<f64>) -> Result<()> {
    let p = pose.translation.vector;
    if !scene.bounds().contains(&p) {
        return Err(Error::OutOfBounds { x: p.x, y: p.y, z: p.z });
    }
    if scene.is_occupied(&scene.voxel_key(&p)) {
        return Err(Error::InsideGeometry);
    }
    Ok(())
}

/// Renders a frame and reports the voxel hit by each pixel.
pub fn render_with_hits(
    scene: &Scene,
    pose: &Isometry3<f64>,
    intrinsics: &Intrinsics,
) -> Result<(Frame, Vec<Option<VoxelKey>>)> {
    intrinsics.validate()?;
    check_pose(scene, pose)?;
    let center = pose.translation.vector;
    let width = intrinsics.width;
    let pixels: Vec<(Vec3, f64, Option<VoxelKey>)> = (0..intrinsics.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i as u32 % width, i as u32 / width);
            let dir = pose.rotation * intrinsics.ray(u, v);
            match cast(scene, &center, &dir) {
                Some((key, range)) => {
                    let m = scene.material(&key).unwrap();
                    (m.shade(&-dir), range, Some(key))
                }
                None => (scene.background(), 0.0, None),
            }
        })
        .collect();
    let mut rgb = Vec::with_capacity(pixels.len());
    let mut depth = Vec::with_capacity(pixels.len());
    let mut hits = Vec::with_capacity(pixels.len());
    for (c, d, h) in pixels {
        rgb.push(c);
        depth.push(d);
        hits.push(h);
    }
    Ok((Frame::new(*pose, *intrinsics, rgb, depth)?, hits))
}

/// Colour and range image from `pose`; pixels without a hit get the
/// background colour and depth 0.
pub fn render_rgbd(scene: &Scene, pose: &Isometry3<f64>, intrinsics: &Intrinsics) -> Result<Frame> {
    render_with_hits(scene, pose, intrinsics).map(|(f, _)| f)
}
