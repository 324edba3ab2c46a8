//! Synthetic workloads for latency and memory measurements.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::renderability::{batch_renderability, renderability};
use crate::world_map::{Aabb, MapConfig, VoxelKey};
use crate::{Lattice, LatticeSpec, Result, Vec3, VoxelStats, WorldMap};

fn upper_hemisphere(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(0.05..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// A map holding `voxels` observed voxels in a cube block, each seen from
/// `observations` random upward directions, plus a camera above the block.
pub fn query_map(voxels: usize, observations: usize, seed: u64) -> Result<(WorldMap, Vec<VoxelKey>, Vec3)> {
    let side = (voxels as f64).cbrt().ceil() as i32;
    let extent = (side as f64 * 0.05 / 0.2).ceil() * 0.2 + 0.4;
    let bounds = Aabb::new(Vec3::zeros(), Vec3::new(extent, extent, extent + 2.0));
    let mut map = WorldMap::new(MapConfig::new(bounds))?;
    let lattice = map.lattice().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = Vec::with_capacity(voxels);
    'fill: for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                if keys.len() == voxels {
                    break 'fill;
                }
                let key = VoxelKey([x, y, z]);
                let mut stats = VoxelStats::for_lattice(&lattice);
                for _ in 0..observations {
                    let dir = -upper_hemisphere(&mut rng);
                    let rgb = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                    stats.update(&lattice, &dir, &rgb, rng.gen_range(0.5..3.0))?;
                }
                map.insert_stats(key, stats)?;
                keys.push(key);
            }
        }
    }
    let camera = Vec3::new(extent / 2.0, extent / 2.0, extent + 1.5);
    Ok((map, keys, camera))
}

/// Median wall time of `reps` batch queries, seconds.
pub fn time_batch_query(map: &WorldMap, keys: &[VoxelKey], camera: &Vec3, reps: usize) -> f64 {
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            let rs = batch_renderability(map, keys, camera);
            std::hint::black_box(rs);
            t.elapsed().as_secs_f64()
        })
        .collect();
    median(&mut times)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeSample {
    pub keyframes: usize,
    /// Median time of one frame's update plus query over all voxels.
    pub seconds_per_frame: f64,
    /// Mean visited bins per voxel at this point.
    pub mean_bins: f64,
}

/// A flat patch of voxels observed by a camera hopping over the hemisphere
/// above it. Each keyframe updates every voxel with its viewing ray and
/// then scores every voxel from a fixed novel viewpoint.
pub struct KeyframeStream {
    lattice: Lattice,
    centers: Vec<Vec3>,
    stats: Vec<VoxelStats>,
    novel: Vec3,
    rng: ChaCha8Rng,
    frames: usize,
}

impl KeyframeStream {
    pub fn new(voxels: usize, seed: u64) -> Result<Self> {
        let lattice = Lattice::build(LatticeSpec::Bins(64))?;
        let side = (voxels as f64).sqrt().ceil() as usize;
        let centers: Vec<Vec3> = (0..voxels)
            .map(|i| Vec3::new((i % side) as f64 * 0.05, (i / side) as f64 * 0.05, 0.0))
            .collect();
        let stats = vec![VoxelStats::for_lattice(&lattice); voxels];
        let mid = side as f64 * 0.025;
        Ok(Self {
            lattice,
            centers,
            stats,
            novel: Vec3::new(mid + 0.7, mid - 0.4, 1.8),
            rng: ChaCha8Rng::seed_from_u64(seed),
            frames: 0,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn stats(&self) -> &[VoxelStats] {
        &self.stats
    }

    /// Ingests one keyframe and queries all voxels; returns the mean R.
    pub fn step(&mut self) -> Result<f64> {
        let mid = self.centers.last().map_or(Vec3::zeros(), |c| c / 2.0);
        let camera = mid + upper_hemisphere(&mut self.rng) * 2.0;
        let tint: f64 = self.rng.gen_range(0.0..0.2);
        for (c, s) in self.centers.iter().zip(self.stats.iter_mut()) {
            let ray = c - camera;
            let depth = ray.norm();
            let rgb = Vec3::new(0.4 + tint, 0.5, 0.6 - tint);
            s.update(&self.lattice, &(ray / depth), &rgb, depth)?;
        }
        let mut sum = 0.0;
        for (c, s) in self.centers.iter().zip(&self.stats) {
            let ray = c - self.novel;
            let depth = ray.norm();
            sum += renderability(s, &self.lattice, &(ray / depth), depth)?.r;
        }
        self.frames += 1;
        Ok(sum / self.centers.len() as f64)
    }
}

/// Per-frame cost at each checkpoint keyframe count (ascending), from the
/// median of `window` consecutive frames ending there.
pub fn keyframe_scaling(voxels: usize, checkpoints: &[usize], window: usize, seed: u64) -> Result<Vec<KeyframeSample>> {
    let mut stream = KeyframeStream::new(voxels, seed)?;
    let mut out = Vec::new();
    for &target in checkpoints {
        let start_timing = target.saturating_sub(window);
        let mut times = Vec::new();
        while stream.frames() < target {
            let t = Instant::now();
            std::hint::black_box(stream.step()?);
            let dt = t.elapsed().as_secs_f64();
            if stream.frames() > start_timing {
                times.push(dt);
            }
        }
        let mean_bins = stream.stats().iter().map(|s| s.mask().count() as f64).sum::<f64>() / voxels as f64;
        out.push(KeyframeSample {
            keyframes: target,
            seconds_per_frame: if times.is_empty() { 0.0 } else { median(&mut times) },
            mean_bins,
        });
    }
    Ok(out)
}

/// In-memory size of one voxel record, bytes (the 64-bin mask is inline).
pub fn voxel_state_bytes() -> usize {
    std::mem::size_of::<VoxelStats>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_map_has_requested_size() {
        let (map, keys, cam) = query_map(1000, 4, 1).unwrap();
        assert_eq!(keys.len(), 1000);
        assert_eq!(map.voxel_count(), 1000);
        let rs = batch_renderability(&map, &keys, &cam);
        assert!(rs.iter().all(|r| (0.0..=1.0).contains(r)));
        assert!(rs.iter().any(|r| *r > 0.0));
    }

    #[test]
    fn keyframe_stream_counts() {
        let samples = keyframe_scaling(100, &[5, 20], 3, 2).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].keyframes, 20);
        assert!(samples[1].mean_bins >= samples[0].mean_bins);
        assert!(voxel_state_bytes() <= 128);
    }
}
