//! Binary map snapshots (little-endian).
//!
//! ```text
//! magic      8 bytes  "VFMAPSNP"
//! version    u32
//! bounds     6 x f64  min xyz, max xyz
//! voxel_size f64
//! cell_size  f64
//! max_range  f64
//! lattice N  u32
//! config     32 bytes (hash of the producing configuration, zero if none)
//! count      u64
//! count x    { key 3 x i32, mask ceil(N/64) x u64, n u64, mean 3 x f64, m2 6 x f64, rho_max f64 }
//! dims       3 x i32
//! runs       u64
//! runs x     { state u8, length u32 }   occupancy in cell-index order
//! ```

use std::io::{Read, Write};

use super::{Aabb, CellState, MapConfig, VoxelKey, WorldMap};
use crate::fibsphere::LatticeSpec;
use crate::{Error, Result, Vec3, VoxelStats};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"VFMAPSNP";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot(map: &WorldMap, config_hash: &[u8; 32], mut out: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    let cfg = map.config();
    for v in cfg.bounds.min.iter().chain(cfg.bounds.max.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [cfg.voxel_size, cfg.cell_size, cfg.max_range] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(map.lattice().len() as u32).to_le_bytes());
    buf.extend_from_slice(config_hash);
    let keys = map.sorted_keys();
    buf.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for key in &keys {
        for c in key.0 {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        map.stats(key).unwrap().encode(&mut buf);
    }
    for d in map.dims() {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    let mut runs: Vec<(CellState, u32)> = Vec::new();
    for &state in map.cells() {
        match runs.last_mut() {
            Some((s, len)) if *s == state && *len < u32::MAX => *len += 1,
            _ => runs.push((state, 1)),
        }
    }
    buf.extend_from_slice(&(runs.len() as u64).to_le_bytes());
    for (state, len) in runs {
        buf.push(state as u8);
        buf.extend_from_slice(&len.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Snapshot("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

/// Reads a snapshot; returns the map and the stored configuration hash.
pub fn read_snapshot(mut input: impl Read) -> Result<(WorldMap, [u8; 32])> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let mut b = [0.0; 6];
    for v in &mut b {
        *v = cur.f64()?;
    }
    let bounds = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
    let voxel_size = cur.f64()?;
    let cell_size = cur.f64()?;
    let max_range = cur.f64()?;
    let n_bins = cur.u32()? as usize;
    let hash: [u8; 32] = cur.array()?;
    let config = MapConfig {
        bounds,
        voxel_size,
        cell_size,
        voxel_lattice: LatticeSpec::Bins(n_bins),
        max_range,
    };
    let mut map = WorldMap::new(config)?;

    let count = cur.u64()?;
    for _ in 0..count {
        let key = VoxelKey([cur.i32()?, cur.i32()?, cur.i32()?]);
        let (stats, used) = VoxelStats::decode(&bytes[cur.pos..], n_bins)?;
        cur.pos += used;
        if map.stats(&key).is_some() {
            return Err(Error::Snapshot(format!("duplicate voxel {key:?}")));
        }
        map.insert_stats(key, stats)
            .map_err(|e| Error::Snapshot(format!("voxel {key:?}: {e}")))?;
    }

    let dims = [cur.i32()?, cur.i32()?, cur.i32()?];
    if dims != map.dims() {
        return Err(Error::Snapshot(format!(
            "occupancy dims {dims:?} do not match bounds ({:?})",
            map.dims()
        )));
    }
    let runs = cur.u64()?;
    let mut cells = Vec::with_capacity(map.cells.len());
    for _ in 0..runs {
        let state = CellState::from_u8(cur.take(1)?[0])
            .ok_or_else(|| Error::Snapshot("bad cell state".into()))?;
        let len = cur.u32()? as usize;
        if cells.len() + len > map.cells.len() {
            return Err(Error::Snapshot("occupancy runs overflow the grid".into()));
        }
        cells.extend(std::iter::repeat_n(state, len));
    }
    if cells.len() != map.cells.len() {
        return Err(Error::Snapshot("occupancy runs do not cover the grid".into()));
    }
    for (key, _) in map.voxels() {
        let idx = map.cell_index(&map.cell_of_voxel(key)).unwrap();
        if cells[idx] != CellState::Occupied {
            return Err(Error::Snapshot(format!("voxel {key:?} lies in a non-occupied cell")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    map.cells = cells;
    Ok((map, hash))
}
