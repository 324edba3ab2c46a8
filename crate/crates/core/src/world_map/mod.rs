//! Online maps built from posed RGB-D frames.
//!
//! Two grids share one origin (`bounds.min`): a sparse fine grid of
//! [`VoxelStats`] for surface voxels (default 5 cm) and a dense coarse
//! occupancy grid (default 20 cm) with unknown/free/occupied cells. The
//! coarse cell size must be an integer multiple of the voxel size so every
//! voxel sits in exactly one cell.

mod frame;
mod path;
mod snapshot;
pub mod traverse;
mod visibility;

use std::collections::HashMap;

pub use frame::{look_at, Frame, Intrinsics};
pub use path::DistanceField;
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use visibility::{PinholeProbe, View, ViewQuery, VisibleVoxel};

use crate::fibsphere::{Lattice, LatticeSpec};
use crate::{Error, Result, Vec3, VoxelStats};
use traverse::GridWalk;

/// Index of a fine statistics voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey(pub [i32; 3]);

/// Index of a coarse occupancy cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey(pub [i32; 3]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl CellState {
    pub fn name(self) -> &'static str {
        match self {
            CellState::Unknown => "unknown",
            CellState::Free => "free",
            CellState::Occupied => "occupied",
        }
    }

    pub(crate) fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CellState::Unknown),
            1 => Some(CellState::Free),
            2 => Some(CellState::Occupied),
            _ => None,
        }
    }
}

/// Axis-aligned box in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub bounds: Aabb,
    pub voxel_size: f64,
    pub cell_size: f64,
    pub voxel_lattice: LatticeSpec,
    /// Free-space carving length for pixels without a depth return.
    pub max_range: f64,
}

impl MapConfig {
    pub fn new(bounds: Aabb) -> Self {
        Self {
            bounds,
            voxel_size: 0.05,
            cell_size: 0.20,
            voxel_lattice: LatticeSpec::Bins(64),
            max_range: 8.0,
        }
    }
}

/// Counters from one [`WorldMap::ingest_frame`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Pixels with a valid depth return inside the bounds.
    pub pixels_used: usize,
    /// Distinct statistics voxels updated.
    pub voxels_touched: usize,
    pub voxels_created: usize,
    pub cells_occupied: usize,
    pub cells_carved: usize,
    pub rgb_clamped: usize,
    pub out_of_bounds: usize,
    /// Hits that landed in a cell an earlier ray had carved free.
    pub free_to_occupied: usize,
}

/// The voxel-statistics map plus the occupancy grid.
#[derive(Debug, Clone)]
pub struct WorldMap {
    config: MapConfig,
    lattice: Lattice,
    stats: HashMap<VoxelKey, VoxelStats>,
    cell_voxels: HashMap<CellKey, Vec<VoxelKey>>,
    dims: [i32; 3],
    cells: Vec<CellState>,
    voxels_per_cell: i32,
    rgb_clamped: u64,
}

// Backprojected points sit on the face of the voxel they hit; pushing them
// slightly along the ray resolves them into that voxel.
const SURFACE_NUDGE: f64 = 1e-4;

/// Point a range return is attributed to: `range` along the ray plus a
/// small fraction of a voxel, so hits on a face resolve into the voxel behind it.
pub fn backproject(center: &Vec3, dir: &Vec3, range: f64, voxel_size: f64) -> Vec3 {
    center + dir * (range + SURFACE_NUDGE * voxel_size)
}

impl WorldMap {
    pub fn new(config: MapConfig) -> Result<Self> {
        let lattice = Lattice::build(config.voxel_lattice)?;
        Self::with_lattice(config, lattice)
    }

    pub(crate) fn with_lattice(config: MapConfig, lattice: Lattice) -> Result<Self> {
        let ext = config.bounds.extent();
        if !(config.voxel_size > 0.0 && config.cell_size > 0.0)
            || !ext.iter().all(|e| e.is_finite() && *e > 0.0)
        {
            return Err(Error::InvalidConfig("bounds and grid sizes must be positive".into()));
        }
        let ratio = config.cell_size / config.voxel_size;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "cell size {} is not an integer multiple of voxel size {}",
                config.cell_size, config.voxel_size
            )));
        }
        if !(config.max_range > 0.0) {
            return Err(Error::InvalidConfig("max_range must be positive".into()));
        }
        let dims = [0, 1, 2].map(|a| (ext[a] / config.cell_size - 1e-9).ceil().max(1.0) as i32);
        let total = dims.iter().map(|&d| d as usize).product();
        Ok(Self {
            voxels_per_cell: ratio.round() as i32,
            config,
            lattice,
            stats: HashMap::new(),
            cell_voxels: HashMap::new(),
            dims,
            cells: vec![CellState::Unknown; total],
            rgb_clamped: 0,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Aabb {
        &self.config.bounds
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn cell_size(&self) -> f64 {
        self.config.cell_size
    }

    /// Total RGB samples clamped into `[0, 1]` since construction.
    pub fn rgb_clamped(&self) -> u64 {
        self.rgb_clamped
    }

    pub fn voxel_key(&self, p: &Vec3) -> VoxelKey {
        let o = self.config.bounds.min;
        let s = self.config.voxel_size;
        VoxelKey([0, 1, 2].map(|a| ((p[a] - o[a]) / s).floor() as i32))
    }

    pub fn voxel_center(&self, key: &VoxelKey) -> Vec3 {
        let o = self.config.bounds.min;
        let s = self.config.voxel_size;
        Vec3::new(
            o.x + (key.0[0] as f64 + 0.5) * s,
            o.y + (key.0[1] as f64 + 0.5) * s,
            o.z + (key.0[2] as f64 + 0.5) * s,
        )
    }

    pub fn cell_key(&self, p: &Vec3) -> CellKey {
        let o = self.config.bounds.min;
        let s = self.config.cell_size;
        CellKey([0, 1, 2].map(|a| ((p[a] - o[a]) / s).floor() as i32))
    }

    pub fn cell_center(&self, key: &CellKey) -> Vec3 {
        let o = self.config.bounds.min;
        let s = self.config.cell_size;
        Vec3::new(
            o.x + (key.0[0] as f64 + 0.5) * s,
            o.y + (key.0[1] as f64 + 0.5) * s,
            o.z + (key.0[2] as f64 + 0.5) * s,
        )
    }

    pub fn cell_of_voxel(&self, key: &VoxelKey) -> CellKey {
        CellKey(key.0.map(|v| v.div_euclid(self.voxels_per_cell)))
    }

    pub(crate) fn cell_index(&self, key: &CellKey) -> Option<usize> {
        let [x, y, z] = key.0;
        let [dx, dy, dz] = self.dims;
        if x < 0 || y < 0 || z < 0 || x >= dx || y >= dy || z >= dz {
            return None;
        }
        Some((x as usize * dy as usize + y as usize) * dz as usize + z as usize)
    }

    pub(crate) fn cell_from_index(&self, idx: usize) -> CellKey {
        let [_, dy, dz] = self.dims.map(|d| d as usize);
        CellKey([(idx / (dy * dz)) as i32, ((idx / dz) % dy) as i32, (idx % dz) as i32])
    }

    pub fn in_grid(&self, key: &CellKey) -> bool {
        self.cell_index(key).is_some()
    }

    /// State of a cell; out-of-grid cells read as unknown.
    pub fn cell_state(&self, key: &CellKey) -> CellState {
        self.cell_index(key)
            .map_or(CellState::Unknown, |i| self.cells[i])
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cell_count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// Applies a state transition. Unknown may become free or occupied and
    /// free may become occupied (surface evidence wins); occupied is final.
    /// Returns whether the state changed.
    pub fn set_cell(&mut self, key: &CellKey, state: CellState) -> bool {
        let Some(i) = self.cell_index(key) else {
            return false;
        };
        let allowed = matches!(
            (self.cells[i], state),
            (CellState::Unknown, CellState::Free | CellState::Occupied)
                | (CellState::Free, CellState::Occupied)
        );
        if allowed {
            self.cells[i] = state;
        }
        allowed
    }

    pub fn stats(&self, key: &VoxelKey) -> Option<&VoxelStats> {
        self.stats.get(key)
    }

    pub fn voxel_count(&self) -> usize {
        self.stats.len()
    }

    pub fn voxels(&self) -> impl Iterator<Item = (&VoxelKey, &VoxelStats)> {
        self.stats.iter()
    }

    /// Voxel keys in ascending order.
    pub fn sorted_keys(&self) -> Vec<VoxelKey> {
        let mut keys: Vec<_> = self.stats.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn voxels_in_cell(&self, cell: &CellKey) -> &[VoxelKey] {
        self.cell_voxels.get(cell).map_or(&[], Vec::as_slice)
    }

    fn check_position(&self, p: &Vec3) -> Result<()> {
        if !self.config.bounds.contains(p) || !self.in_grid(&self.cell_key(p)) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y, z: p.z });
        }
        Ok(())
    }

    /// Errors unless `p` lies in a free cell.
    pub fn require_free(&self, p: &Vec3) -> Result<CellKey> {
        self.check_position(p)?;
        let cell = self.cell_key(p);
        match self.cell_state(&cell) {
            CellState::Free => Ok(cell),
            state => Err(Error::NotFree {
                cell,
                state: state.name(),
            }),
        }
    }

    /// Inserts or merges statistics for one voxel, marking its cell occupied.
    pub fn insert_stats(&mut self, key: VoxelKey, stats: VoxelStats) -> Result<()> {
        let center = self.voxel_center(&key);
        self.check_position(&center)?;
        if stats.n_bins() != self.lattice.len() {
            return Err(Error::LatticeMismatch {
                left: self.lattice.len(),
                right: stats.n_bins(),
            });
        }
        let cell = self.cell_of_voxel(&key);
        self.set_cell(&cell, CellState::Occupied);
        match self.stats.get_mut(&key) {
            Some(existing) => *existing = existing.merge(&stats)?,
            None => {
                self.stats.insert(key, stats);
                self.cell_voxels.entry(cell).or_default().push(key);
            }
        }
        Ok(())
    }

    /// Folds one posed RGB-D frame into both maps.
    ///
    /// Every valid-depth pixel updates the statistics voxel its backprojected
    /// point falls in and marks the enclosing cell occupied. Afterwards each
    /// pixel's ray is carved free up to its hit (or `max_range` without a
    /// return); occupied cells are never carved.
    pub fn ingest_frame(&mut self, frame: &Frame) -> Result<IngestReport> {
        frame.validate()?;
        let center = frame.camera_center();
        self.check_position(&center)?;

        let k = frame.intrinsics;
        let mut report = IngestReport::default();
        let mut touched = std::collections::HashSet::new();
        let mut rays = Vec::with_capacity(k.pixel_count());

        for v in 0..k.height {
            for u in 0..k.width {
                let i = (v * k.width + u) as usize;
                let dir = frame.world_ray(u, v);
                let range = frame.depth[i];
                if !(range.is_finite() && range > 0.0) {
                    rays.push((dir, self.config.max_range));
                    continue;
                }
                let point = backproject(&center, &dir, range, self.config.voxel_size);
                let key = self.voxel_key(&point);
                let cell = self.cell_of_voxel(&key);
                let Some(cell_idx) = self.cell_index(&cell) else {
                    report.out_of_bounds += 1;
                    rays.push((dir, range));
                    continue;
                };
                rays.push((dir, range));

                let stats = match self.stats.entry(key) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        report.voxels_created += 1;
                        self.cell_voxels.entry(cell).or_default().push(key);
                        e.insert(VoxelStats::for_lattice(&self.lattice))
                    }
                };
                let outcome = stats.update(&self.lattice, &dir, &frame.rgb[i], range)?;
                if outcome.clamped {
                    report.rgb_clamped += 1;
                }
                touched.insert(key);
                report.pixels_used += 1;
                match self.cells[cell_idx] {
                    CellState::Occupied => {}
                    prev => {
                        if prev == CellState::Free {
                            report.free_to_occupied += 1;
                        }
                        self.cells[cell_idx] = CellState::Occupied;
                        report.cells_occupied += 1;
                    }
                }
            }
        }
        report.voxels_touched = touched.len();
        self.rgb_clamped += report.rgb_clamped as u64;

        let origin = self.config.bounds.min;
        for (dir, length) in rays {
            for crossing in GridWalk::new(&origin, self.config.cell_size, &center, &dir, length) {
                let Some(idx) = self.cell_index(&CellKey(crossing.cell)) else {
                    break;
                };
                if self.cells[idx] == CellState::Unknown {
                    self.cells[idx] = CellState::Free;
                    report.cells_carved += 1;
                }
            }
        }
        Ok(report)
    }
}
