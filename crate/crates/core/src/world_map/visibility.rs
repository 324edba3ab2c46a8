//! Ray-cast visibility on the occupancy grid.
//!
//! A view is sampled by a fixed ray set: one ray per panoramic lattice bin,
//! or one per pixel of a low-resolution pinhole probe raster. Each ray walks
//! the coarse grid; unknown cells it crosses count as unexplored, and the
//! first occupied cell contributes all statistics voxels it contains.

use nalgebra::Isometry3;

use super::traverse::GridWalk;
use super::{look_at, CellKey, CellState, VoxelKey, WorldMap};
use crate::{Lattice, Result, Vec3};

/// Low-resolution pinhole probe used for frustum visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeProbe {
    pub axis: Vec3,
    pub half_fov_x: f64,
    pub half_fov_y: f64,
    /// Prefilter cone; the circumscribed cone of the frustum by default.
    pub cone_half_angle: f64,
    pub resolution: u32,
}

impl PinholeProbe {
    pub fn new(axis: Vec3, half_fov_x: f64, half_fov_y: f64, resolution: u32) -> Self {
        let cone = (half_fov_x.tan().hypot(half_fov_y.tan())).atan();
        Self {
            axis: axis.normalize(),
            half_fov_x,
            half_fov_y,
            cone_half_angle: cone,
            resolution,
        }
    }

    pub fn pose(&self, position: Vec3) -> Isometry3<f64> {
        look_at(position, &self.axis)
    }

    fn rays(&self, pose: &Isometry3<f64>) -> Vec<Vec3> {
        let res = self.resolution.max(1);
        let (tx, ty) = (self.half_fov_x.tan(), self.half_fov_y.tan());
        let mut rays = Vec::with_capacity((res * res) as usize);
        for v in 0..res {
            for u in 0..res {
                let x = tx * (2.0 * (u as f64 + 0.5) / res as f64 - 1.0);
                let y = ty * (2.0 * (v as f64 + 0.5) / res as f64 - 1.0);
                rays.push(pose.rotation * Vec3::new(x, y, 1.0).normalize());
            }
        }
        rays
    }

    /// Whether world point `p` seen from `pose` lies inside the cone and frustum.
    pub fn contains(&self, pose: &Isometry3<f64>, p: &Vec3) -> bool {
        let offset = p - pose.translation.vector;
        let norm = offset.norm();
        if norm == 0.0 || offset.dot(&self.axis) < norm * self.cone_half_angle.cos() {
            return false;
        }
        let c = pose.rotation.inverse() * offset;
        c.z > 0.0
            && c.x.abs() <= c.z * self.half_fov_x.tan()
            && c.y.abs() <= c.z * self.half_fov_y.tan()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum View<'a> {
    Panoramic(&'a Lattice),
    Pinhole(PinholeProbe),
}

/// A visible statistics voxel with the query geometry from the viewpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleVoxel {
    pub key: VoxelKey,
    /// Unit direction from the viewpoint to the voxel center.
    pub dir: Vec3,
    pub depth: f64,
}

/// Visible voxels `V` and unexplored cells `G` for one viewpoint; both
/// sorted by key.
#[derive(Debug, Clone, Default)]
pub struct ViewQuery {
    pub voxels: Vec<VisibleVoxel>,
    pub unknown_cells: Vec<CellKey>,
}

const SEEN_UNKNOWN: u8 = 1;
const HIT: u8 = 2;

impl WorldMap {
    /// Casts the view's ray set from `position` (which must be in a free cell).
    pub fn query_view(&self, position: &Vec3, view: &View<'_>, max_range: f64) -> Result<ViewQuery> {
        self.require_free(position)?;
        let pinhole_pose = match view {
            View::Pinhole(probe) => Some(probe.pose(*position)),
            View::Panoramic(_) => None,
        };
        let rays = match (view, &pinhole_pose) {
            (View::Panoramic(lattice), _) => lattice.centers().to_vec(),
            (View::Pinhole(probe), Some(pose)) => probe.rays(pose),
            (View::Pinhole(_), None) => unreachable!(),
        };

        let mut marks = vec![0u8; self.cells.len()];
        let origin = self.config.bounds.min;
        for dir in &rays {
            for crossing in GridWalk::new(&origin, self.config.cell_size, position, dir, max_range) {
                let Some(idx) = self.cell_index(&CellKey(crossing.cell)) else {
                    break;
                };
                match self.cells[idx] {
                    CellState::Free => {}
                    CellState::Unknown => marks[idx] |= SEEN_UNKNOWN,
                    CellState::Occupied => {
                        marks[idx] |= HIT;
                        break;
                    }
                }
            }
        }

        let mut out = ViewQuery::default();
        for (idx, &m) in marks.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let cell = self.cell_from_index(idx);
            if m & SEEN_UNKNOWN != 0 {
                out.unknown_cells.push(cell);
            }
            if m & HIT != 0 {
                for key in self.voxels_in_cell(&cell) {
                    let center = self.voxel_center(key);
                    if let (View::Pinhole(probe), Some(pose)) = (view, &pinhole_pose) {
                        if !probe.contains(pose, &center) {
                            continue;
                        }
                    }
                    let offset = center - position;
                    let depth = offset.norm();
                    if depth > 0.0 {
                        out.voxels.push(VisibleVoxel {
                            key: *key,
                            dir: offset / depth,
                            depth,
                        });
                    }
                }
            }
        }
        out.unknown_cells.sort_unstable();
        out.voxels.sort_unstable_by_key(|v| v.key);
        Ok(out)
    }

    pub fn visible_voxels(&self, position: &Vec3, view: &View<'_>, max_range: f64) -> Result<Vec<VisibleVoxel>> {
        Ok(self.query_view(position, view, max_range)?.voxels)
    }

    pub fn visible_unknown_cells(&self, position: &Vec3, view: &View<'_>, max_range: f64) -> Result<Vec<CellKey>> {
        Ok(self.query_view(position, view, max_range)?.unknown_cells)
    }
}

#[cfg(test)]
mod tests {
    use super::super::traverse::ray_box;
    use super::super::{Aabb, MapConfig};
    use super::*;
    use crate::{LatticeSpec, VoxelStats};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn pano() -> Lattice {
        Lattice::build(LatticeSpec::Resolution(10f64.to_radians())).unwrap()
    }

    fn free_map(size: f64) -> WorldMap {
        let mut map = WorldMap::new(MapConfig::new(Aabb::new(Vec3::zeros(), Vec3::repeat(size)))).unwrap();
        for idx in 0..map.cells.len() {
            map.cells[idx] = CellState::Free;
        }
        map
    }

    fn observed(map: &WorldMap) -> VoxelStats {
        let mut s = VoxelStats::for_lattice(map.lattice());
        s.update(map.lattice(), &Vec3::x(), &Vec3::repeat(0.5), 1.0).unwrap();
        s
    }

    fn add_cell_voxels(map: &mut WorldMap, cell: CellKey) {
        // one voxel per cell corner region
        for dx in [0, 3] {
            for dy in [0, 3] {
                let key = VoxelKey([cell.0[0] * 4 + dx, cell.0[1] * 4 + dy, cell.0[2] * 4]);
                let s = observed(map);
                map.insert_stats(key, s).unwrap();
            }
        }
    }

    #[test]
    fn empty_map_sees_nothing() {
        let map = free_map(4.0);
        let q = map.query_view(&Vec3::repeat(2.0), &View::Panoramic(&pano()), 5.0).unwrap();
        assert!(q.voxels.is_empty());
        assert!(q.unknown_cells.is_empty());
    }

    #[test]
    fn fresh_map_requires_free_position() {
        let map = WorldMap::new(MapConfig::new(Aabb::new(Vec3::zeros(), Vec3::repeat(4.0)))).unwrap();
        assert!(map.query_view(&Vec3::repeat(2.0), &View::Panoramic(&pano()), 5.0).is_err());
        assert!(map.query_view(&Vec3::repeat(9.0), &View::Panoramic(&pano()), 5.0).is_err());
    }

    #[test]
    fn single_obstacle_along_x() {
        let mut map = free_map(4.0);
        let position = Vec3::new(1.1, 2.1, 2.1);
        let target = map.cell_key(&(position + Vec3::new(1.0, 0.0, 0.0)));
        add_cell_voxels(&mut map, target);
        let q = map.query_view(&position, &View::Panoramic(&pano()), 5.0).unwrap();
        let keys: BTreeSet<_> = q.voxels.iter().map(|v| v.key).collect();
        let expected: BTreeSet<_> = map.voxels_in_cell(&target).iter().copied().collect();
        assert_eq!(keys, expected);
        for v in &q.voxels {
            assert!((v.depth - 1.0).abs() < 0.2, "{}", v.depth);
        }
    }

    #[test]
    fn occluded_cell_is_excluded() {
        let mut map = free_map(4.0);
        let position = Vec3::new(0.5, 2.1, 2.1);
        // a full wall of occupied cells at x-index 10, another at 14
        for wall in [10, 14] {
            for y in 0..20 {
                for z in 0..20 {
                    add_cell_voxels(&mut map, CellKey([wall, y, z]));
                }
            }
        }
        let q = map.query_view(&position, &View::Panoramic(&pano()), 10.0).unwrap();
        assert!(!q.voxels.is_empty());
        assert!(q.voxels.iter().all(|v| map.cell_of_voxel(&v.key).0[0] == 10));
    }

    #[test]
    fn unknown_cells_grow_with_range() {
        let mut map = WorldMap::new(MapConfig::new(Aabb::new(Vec3::zeros(), Vec3::repeat(4.0)))).unwrap();
        let position = Vec3::repeat(2.1);
        map.set_cell(&map.cell_key(&position), CellState::Free);
        let p = pano();
        let mut last = 0;
        for range in [0.5, 1.0, 2.0, 4.0] {
            let g = map.visible_unknown_cells(&position, &View::Panoramic(&p), range).unwrap();
            assert!(g.len() > last);
            last = g.len();
        }
    }

    #[test]
    fn pinhole_filters_by_frustum() {
        let mut map = free_map(4.0);
        let position = Vec3::new(0.5, 2.1, 2.1);
        let near = map.cell_key(&Vec3::new(2.5, 2.1, 2.1));
        add_cell_voxels(&mut map, near);
        let side = map.cell_key(&Vec3::new(0.5, 3.5, 2.1));
        add_cell_voxels(&mut map, side);
        let probe = PinholeProbe::new(Vec3::x(), 30f64.to_radians(), 30f64.to_radians(), 64);
        assert!((probe.cone_half_angle.to_degrees() - 39.23).abs() < 0.01);
        let v = map.visible_voxels(&position, &View::Pinhole(probe), 6.0).unwrap();
        assert!(!v.is_empty());
        let pose = probe.pose(position);
        for vox in &v {
            assert!(probe.contains(&pose, &map.voxel_center(&vox.key)));
            assert!(vox.dir.x > 0.8);
        }
    }

    /// Exhaustive oracle: per ray, intersect every cell box; a ray stops at
    /// the nearest occupied cell and reports unknown cells entered before it.
    fn oracle_query(map: &WorldMap, position: &Vec3, rays: &[Vec3], max_range: f64) -> (BTreeSet<CellKey>, BTreeSet<CellKey>) {
        let s = map.cell_size();
        let [dx, dy, dz] = map.dims();
        let mut unknown = BTreeSet::new();
        let mut hit = BTreeSet::new();
        for dir in rays {
            let mut crossings = Vec::new();
            for x in 0..dx {
                for y in 0..dy {
                    for z in 0..dz {
                        let lo = Vec3::new(x as f64, y as f64, z as f64) * s;
                        if let Some((a, b)) = ray_box(position, dir, &lo, &(lo + Vec3::repeat(s))) {
                            let (a, b) = (a.max(0.0), b.min(max_range));
                            if b > a {
                                crossings.push((a, CellKey([x, y, z])));
                            }
                        }
                    }
                }
            }
            crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
            for (_, cell) in crossings {
                match map.cell_state(&cell) {
                    CellState::Unknown => {
                        unknown.insert(cell);
                    }
                    CellState::Occupied => {
                        hit.insert(cell);
                        break;
                    }
                    CellState::Free => {}
                }
            }
        }
        (unknown, hit)
    }

    #[test]
    fn matches_exhaustive_ray_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lattice = Lattice::build(LatticeSpec::Bins(200)).unwrap();
        for trial in 0..6 {
            let mut map = WorldMap::new(MapConfig::new(Aabb::new(Vec3::zeros(), Vec3::repeat(2.4)))).unwrap();
            for idx in 0..map.cells.len() {
                let r: f64 = rng.gen();
                let cell = map.cell_from_index(idx);
                if r < 0.1 {
                    add_cell_voxels(&mut map, cell);
                } else if r < 0.7 {
                    map.set_cell(&cell, CellState::Free);
                }
            }
            let position = Vec3::new(1.23, 1.17, 1.31);
            let cell = map.cell_key(&position);
            let i = map.cell_index(&cell).unwrap();
            map.cells[i] = CellState::Free;
            let max_range = 1.0 + trial as f64 * 0.4;
            let q = map.query_view(&position, &View::Panoramic(&lattice), max_range).unwrap();
            let (unknown, hit) = oracle_query(&map, &position, lattice.centers(), max_range);
            assert_eq!(q.unknown_cells.iter().copied().collect::<BTreeSet<_>>(), unknown);
            let hit_cells: BTreeSet<_> = q.voxels.iter().map(|v| map.cell_of_voxel(&v.key)).collect();
            assert_eq!(hit_cells, hit);
            // soundness: every reported voxel lies in a first-hit cell
            for v in &q.voxels {
                assert!(hit.contains(&map.cell_of_voxel(&v.key)));
            }
        }
    }
}
