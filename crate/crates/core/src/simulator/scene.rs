//! Voxel scenes with per-voxel materials, presets and a plain-text format.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::world_map::{Aabb, MapConfig, VoxelKey};
use crate::{Error, Result, Vec3};

/// Albedo plus a single view-dependent lobe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub albedo: Vec3,
    pub specular_strength: f64,
    pub specular_dir: Vec3,
    pub specular_exponent: f64,
}

impl Material {
    pub fn lambertian(albedo: Vec3) -> Self {
        Self {
            albedo,
            specular_strength: 0.0,
            specular_dir: Vec3::z(),
            specular_exponent: 1.0,
        }
    }

    pub fn is_lambertian(&self) -> bool {
        self.specular_strength == 0.0
    }

    /// `albedo + s·max(0, ⟨to_camera, specular_dir⟩)^p`, clamped to `[0, 1]`.
    pub fn shade(&self, to_camera: &Vec3) -> Vec3 {
        let lobe = if self.specular_strength > 0.0 {
            self.specular_strength * to_camera.dot(&self.specular_dir).max(0.0).powf(self.specular_exponent)
        } else {
            0.0
        };
        (self.albedo + Vec3::repeat(lobe)).map(|c| c.clamp(0.0, 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.albedo.iter().chain(self.specular_dir.iter()).all(|v| v.is_finite())
            && self.specular_strength.is_finite()
            && self.specular_exponent.is_finite();
        if !finite {
            return Err(Error::InvalidConfig("material has non-finite fields".into()));
        }
        if self.albedo.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidConfig("albedo must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.specular_strength) || self.specular_exponent < 1.0 {
            return Err(Error::InvalidConfig("need s in [0, 1] and p >= 1".into()));
        }
        if (self.specular_dir.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig("specular_dir must be unit length".into()));
        }
        Ok(())
    }
}

const EMPTY: u32 = u32::MAX;

/// Occupied voxels on a regular grid anchored at `bounds.min`.
#[derive(Debug, Clone)]
pub struct Scene {
    bounds: Aabb,
    voxel_size: f64,
    dims: [i32; 3],
    background: Vec3,
    start: Vec3,
    slots: Vec<u32>,
    voxels: Vec<(VoxelKey, Material)>,
}

fn grid_dims(bounds: &Aabb, voxel_size: f64) -> Result<[i32; 3]> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidConfig(format!("voxel size {voxel_size}")));
    }
    let ext = bounds.extent();
    let mut dims = [0; 3];
    for a in 0..3 {
        let n = ext[a] / voxel_size;
        let r = n.round();
        if !(r >= 1.0 && (n - r).abs() < 1e-6 && r < 1e5) {
            return Err(Error::InvalidConfig(format!(
                "bounds extent {} is not a whole number of {voxel_size} m voxels",
                ext[a]
            )));
        }
        dims[a] = r as i32;
    }
    Ok(dims)
}

impl Scene {
    pub fn new(bounds: Aabb, voxel_size: f64, background: Vec3, start: Vec3) -> Result<Self> {
        let dims = grid_dims(&bounds, voxel_size)?;
        if !bounds.contains(&start) {
            return Err(Error::InvalidConfig("start position outside scene bounds".into()));
        }
        if background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidConfig("background must lie in [0, 1]".into()));
        }
        let n = dims.iter().map(|&d| d as usize).product();
        Ok(Self {
            bounds,
            voxel_size,
            dims,
            background,
            start,
            slots: vec![EMPTY; n],
            voxels: Vec::new(),
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn background(&self) -> Vec3 {
        self.background
    }

    /// Default camera start, in free space.
    pub fn start(&self) -> Vec3 {
        self.start
    }

    /// Map configuration whose voxel grid coincides with the scene grid.
    pub fn map_config(&self) -> MapConfig {
        MapConfig {
            voxel_size: self.voxel_size,
            cell_size: 4.0 * self.voxel_size,
            ..MapConfig::new(self.bounds)
        }
    }

    fn slot(&self, key: &VoxelKey) -> Option<usize> {
        let [x, y, z] = key.0;
        let [dx, dy, dz] = self.dims;
        if x < 0 || y < 0 || z < 0 || x >= dx || y >= dy || z >= dz {
            return None;
        }
        Some((x as usize * dy as usize + y as usize) * dz as usize + z as usize)
    }

    pub fn in_grid(&self, key: &VoxelKey) -> bool {
        self.slot(key).is_some()
    }

    pub fn voxel_key(&self, p: &Vec3) -> VoxelKey {
        let g = (p - self.bounds.min) / self.voxel_size;
        VoxelKey([g.x.floor() as i32, g.y.floor() as i32, g.z.floor() as i32])
    }

    pub fn voxel_center(&self, key: &VoxelKey) -> Vec3 {
        self.bounds.min + Vec3::new(key.0[0] as f64 + 0.5, key.0[1] as f64 + 0.5, key.0[2] as f64 + 0.5) * self.voxel_size
    }

    pub fn material(&self, key: &VoxelKey) -> Option<&Material> {
        let s = self.slots[self.slot(key)?];
        (s != EMPTY).then(|| &self.voxels[s as usize].1)
    }

    pub fn is_occupied(&self, key: &VoxelKey) -> bool {
        self.material(key).is_some()
    }

    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    /// Occupied voxels in insertion order.
    pub fn voxels(&self) -> impl Iterator<Item = &(VoxelKey, Material)> {
        self.voxels.iter()
    }

    /// Adds or replaces a voxel.
    pub fn insert(&mut self, key: VoxelKey, material: Material) -> Result<()> {
        material.validate()?;
        let slot = self
            .slot(&key)
            .ok_or_else(|| Error::InvalidConfig(format!("voxel {key:?} outside scene bounds")))?;
        match self.slots[slot] {
            EMPTY => {
                self.slots[slot] = self.voxels.len() as u32;
                self.voxels.push((key, material));
            }
            s => self.voxels[s as usize].1 = material,
        }
        Ok(())
    }

    /// Outward unit normal from the empty in-bounds face neighbours, `None`
    /// for voxels with no exposed face.
    pub fn exposed_normal(&self, key: &VoxelKey) -> Option<Vec3> {
        let mut n = Vec3::zeros();
        for (a, s) in [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)] {
            let mut k = key.0;
            k[a] += s;
            let nb = VoxelKey(k);
            if self.in_grid(&nb) && !self.is_occupied(&nb) {
                n[a] += s as f64;
            }
        }
        let norm = n.norm();
        (norm > 0.0).then(|| n / norm)
    }

    /// Whether `p` is inside the bounds and its voxel is empty.
    pub fn is_free(&self, p: &Vec3) -> bool {
        let key = self.voxel_key(p);
        self.in_grid(&key) && !self.is_occupied(&key)
    }

    /// Smallest distance from `p` to an occupied voxel center within
    /// `radius`, or `None` if there is none.
    pub fn clearance(&self, p: &Vec3, radius: f64) -> Option<f64> {
        let c = self.voxel_key(p);
        let r = (radius / self.voxel_size).ceil() as i32 + 1;
        let mut best: Option<f64> = None;
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let k = VoxelKey([c.0[0] + dx, c.0[1] + dy, c.0[2] + dz]);
                    if self.is_occupied(&k) {
                        let d = (self.voxel_center(&k) - p).norm();
                        if d <= radius && best.is_none_or(|b| d < b) {
                            best = Some(d);
                        }
                    }
                }
            }
        }
        best
    }

    pub fn write_text(&self, mut out: impl Write) -> Result<()> {
        let b = &self.bounds;
        writeln!(out, "viewfield-scene 1")?;
        writeln!(out, "bounds {} {} {} {} {} {}", b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z)?;
        writeln!(out, "voxel_size {}", self.voxel_size)?;
        writeln!(out, "background {} {} {}", self.background.x, self.background.y, self.background.z)?;
        writeln!(out, "start {} {} {}", self.start.x, self.start.y, self.start.z)?;
        for (k, m) in &self.voxels {
            writeln!(
                out,
                "voxel {} {} {} {} {} {} {} {} {} {} {}",
                k.0[0],
                k.0[1],
                k.0[2],
                m.albedo.x,
                m.albedo.y,
                m.albedo.z,
                m.specular_strength,
                m.specular_dir.x,
                m.specular_dir.y,
                m.specular_dir.z,
                m.specular_exponent
            )?;
        }
        Ok(())
    }

    /// Parses the format written by [`Scene::write_text`]. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn read_text(input: impl BufRead) -> Result<Self> {
        let mut header: [Option<Vec<f64>>; 4] = Default::default();
        let mut scene: Option<Scene> = None;
        let mut seen_magic = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let err = |msg: String| Error::SceneFormat { line: lineno, msg };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace();
            let tag = words.next().unwrap();
            let rest: Vec<&str> = words.collect();
            if !seen_magic {
                if tag != "viewfield-scene" || rest != ["1"] {
                    return Err(err("expected `viewfield-scene 1`".into()));
                }
                seen_magic = true;
                continue;
            }
            let numbers = |n: usize| -> Result<Vec<f64>> {
                if rest.len() != n {
                    return Err(err(format!("`{tag}` takes {n} values, got {}", rest.len())));
                }
                rest.iter()
                    .map(|w| w.parse::<f64>().map_err(|e| err(format!("`{w}`: {e}"))))
                    .collect()
            };
            let field = match tag {
                "bounds" => Some((0, 6)),
                "voxel_size" => Some((1, 1)),
                "background" => Some((2, 3)),
                "start" => Some((3, 3)),
                "voxel" => None,
                other => return Err(err(format!("unknown record `{other}`"))),
            };
            if let Some((slot, n)) = field {
                if scene.is_some() || header[slot].is_some() {
                    return Err(err(format!("misplaced or repeated `{tag}`")));
                }
                header[slot] = Some(numbers(n)?);
                continue;
            }
            if scene.is_none() {
                let [Some(b), Some(vs), Some(bg), Some(st)] = &header else {
                    return Err(err("voxel records before the full header".into()));
                };
                let bounds = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
                scene = Some(
                    Scene::new(bounds, vs[0], Vec3::new(bg[0], bg[1], bg[2]), Vec3::new(st[0], st[1], st[2]))
                        .map_err(|e| err(e.to_string()))?,
                );
            }
            let v = numbers(11)?;
            let idx: Vec<i32> = v[..3]
                .iter()
                .map(|x| {
                    if x.fract() == 0.0 && x.abs() < i32::MAX as f64 {
                        Ok(*x as i32)
                    } else {
                        Err(err(format!("voxel index {x} is not an integer")))
                    }
                })
                .collect::<Result<_>>()?;
            let m = Material {
                albedo: Vec3::new(v[3], v[4], v[5]),
                specular_strength: v[6],
                specular_dir: Vec3::new(v[7], v[8], v[9]),
                specular_exponent: v[10],
            };
            let s = scene.as_mut().unwrap();
            let key = VoxelKey([idx[0], idx[1], idx[2]]);
            if s.is_occupied(&key) {
                return Err(err(format!("duplicate voxel {key:?}")));
            }
            s.insert(key, m).map_err(|e| err(e.to_string()))?;
        }
        match scene {
            Some(s) => Ok(s),
            None => {
                let [Some(b), Some(vs), Some(bg), Some(st)] = &header else {
                    return Err(Error::SceneFormat { line: 0, msg: "incomplete header".into() });
                };
                let bounds = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
                Scene::new(bounds, vs[0], Vec3::new(bg[0], bg[1], bg[2]), Vec3::new(st[0], st[1], st[2]))
            }
        }
    }
}

/// Surface finish of a preset block.
#[derive(Debug, Clone, Copy)]
enum Paint {
    Matte { base: [f64; 3] },
    Gloss { base: [f64; 3], strength: f64, exponent: f64 },
}

const JITTER: f64 = 0.15;

/// Solid blocks on the 4-voxel cell lattice. Glossy voxels take their
/// exposed face normal as the lobe direction.
struct Builder {
    scene: Scene,
    solid: Vec<Option<Paint>>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(cells: [i32; 3], seed: u64, start_cell: [i32; 3]) -> Self {
        let cell = 0.2;
        let max = Vec3::new(cells[0] as f64, cells[1] as f64, cells[2] as f64) * cell;
        let start = Vec3::new(start_cell[0] as f64 + 0.5, start_cell[1] as f64 + 0.5, start_cell[2] as f64 + 0.5) * cell;
        let scene = Scene::new(Aabb::new(Vec3::zeros(), max), 0.05, Vec3::new(0.02, 0.02, 0.05), start).unwrap();
        let n = scene.slots.len();
        Self {
            scene,
            solid: vec![None; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fills cells `lo..hi` (exclusive).
    fn block(&mut self, lo: [i32; 3], hi: [i32; 3], paint: Paint) {
        for x in lo[0] * 4..hi[0] * 4 {
            for y in lo[1] * 4..hi[1] * 4 {
                for z in lo[2] * 4..hi[2] * 4 {
                    if let Some(s) = self.scene.slot(&VoxelKey([x, y, z])) {
                        self.solid[s] = Some(paint);
                    }
                }
            }
        }
    }

    fn clear(&mut self, lo: [i32; 3], hi: [i32; 3]) {
        for x in lo[0] * 4..hi[0] * 4 {
            for y in lo[1] * 4..hi[1] * 4 {
                for z in lo[2] * 4..hi[2] * 4 {
                    if let Some(s) = self.scene.slot(&VoxelKey([x, y, z])) {
                        self.solid[s] = None;
                    }
                }
            }
        }
    }

    /// Outer shell one cell thick with distinct matte walls.
    fn shell(&mut self, cells: [i32; 3]) {
        let [cx, cy, cz] = cells;
        self.block([0, 0, 0], [cx, cy, 1], Paint::Matte { base: [0.45, 0.40, 0.35] });
        self.block([0, 0, cz - 1], [cx, cy, cz], Paint::Matte { base: [0.80, 0.80, 0.78] });
        self.block([0, 0, 1], [1, cy, cz - 1], Paint::Matte { base: [0.70, 0.35, 0.30] });
        self.block([cx - 1, 0, 1], [cx, cy, cz - 1], Paint::Matte { base: [0.30, 0.55, 0.70] });
        self.block([1, 0, 1], [cx - 1, 1, cz - 1], Paint::Matte { base: [0.55, 0.65, 0.35] });
        self.block([1, cy - 1, 1], [cx - 1, cy, cz - 1], Paint::Matte { base: [0.65, 0.55, 0.70] });
    }

    fn solid_at(&self, k: [i32; 3]) -> bool {
        match self.scene.slot(&VoxelKey(k)) {
            Some(s) => self.solid[s].is_some(),
            None => true,
        }
    }

    fn finish(mut self) -> Scene {
        let [dx, dy, dz] = self.scene.dims;
        for x in 0..dx {
            for y in 0..dy {
                for z in 0..dz {
                    let key = VoxelKey([x, y, z]);
                    let Some(paint) = self.solid[self.scene.slot(&key).unwrap()] else {
                        continue;
                    };
                    let mut normal = Vec3::zeros();
                    for (a, s) in [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)] {
                        let mut k = key.0;
                        k[a] += s;
                        if !self.solid_at(k) {
                            normal[a] += s as f64;
                        }
                    }
                    let normal = normal.try_normalize(0.0).unwrap_or_else(Vec3::z);
                    let (base, strength, exponent) = match paint {
                        Paint::Matte { base } => (base, 0.0, 1.0),
                        Paint::Gloss { base, strength, exponent } => (base, strength, exponent),
                    };
                    let mut albedo = Vec3::from(base);
                    for c in albedo.iter_mut() {
                        *c = (*c + self.rng.gen_range(-JITTER..=JITTER)).clamp(0.0, 1.0);
                    }
                    let material = Material {
                        albedo,
                        specular_strength: strength,
                        specular_dir: if strength > 0.0 { normal } else { Vec3::z() },
                        specular_exponent: exponent,
                    };
                    self.scene.insert(key, material).unwrap();
                }
            }
        }
        self.scene
    }

    /// Random matte or glossy boxes on the floor inside `lo..hi` (cells),
    /// kept away from the `keep` cell columns.
    fn clutter(&mut self, count: usize, lo: [i32; 2], hi: [i32; 2], keep: &[[i32; 2]], gloss_every: usize) {
        let mut placed = 0;
        let mut attempts = 0;
        while placed < count && attempts < 1000 {
            attempts += 1;
            let w = self.rng.gen_range(1..=3);
            let d = self.rng.gen_range(1..=3);
            let h = self.rng.gen_range(1..=5);
            if hi[0] - w <= lo[0] || hi[1] - d <= lo[1] {
                continue;
            }
            let x = self.rng.gen_range(lo[0]..hi[0] - w);
            let y = self.rng.gen_range(lo[1]..hi[1] - d);
            let blocked = keep
                .iter()
                .any(|k| k[0] >= x - 1 && k[0] <= x + w && k[1] >= y - 1 && k[1] <= y + d);
            if blocked {
                continue;
            }
            let base = [
                self.rng.gen_range(0.2..0.8),
                self.rng.gen_range(0.2..0.8),
                self.rng.gen_range(0.2..0.8),
            ];
            let paint = if gloss_every > 0 && placed % gloss_every == gloss_every - 1 {
                Paint::Gloss { base: base.map(|c| c * 0.5), strength: 0.6, exponent: 8.0 }
            } else {
                Paint::Matte { base }
            };
            self.block([x, y, 1], [x + w, y + d, 1 + h], paint);
            placed += 1;
        }
    }
}

pub const PRESETS: [&str; 3] = ["box_room", "two_rooms", "specular_gallery"];

/// Builds a named preset; deterministic in `seed`.
///
/// * `box_room`: 4 × 4 × 2.4 m room with matte floor-standing boxes.
/// * `two_rooms`: two 3.2 × 3.2 m rooms joined by a doorway, a glossy box among the clutter.
/// * `specular_gallery`: 6.4 × 3.2 m hall whose long walls and pillars alternate matte and glossy panels.
pub fn build_scene(preset: &str, seed: u64) -> Result<Scene> {
    match preset {
        "box_room" => {
            let cells = [20, 20, 12];
            let mut b = Builder::new(cells, seed, [10, 10, 5]);
            b.shell(cells);
            b.clutter(5, [2, 2], [18, 18], &[[10, 10]], 0);
            Ok(b.finish())
        }
        "two_rooms" => {
            let cells = [32, 16, 12];
            let mut b = Builder::new(cells, seed, [8, 8, 5]);
            b.shell(cells);
            b.block([16, 1, 1], [17, 15, 11], Paint::Matte { base: [0.60, 0.60, 0.45] });
            b.clear([16, 6, 1], [17, 10, 9]);
            let keep = [[8, 8], [15, 7], [15, 8], [17, 7], [17, 8], [24, 8]];
            b.clutter(3, [2, 2], [15, 14], &keep, 3);
            b.clutter(3, [18, 2], [30, 14], &keep, 3);
            Ok(b.finish())
        }
        "specular_gallery" => {
            let cells = [32, 16, 12];
            let mut b = Builder::new(cells, seed, [3, 8, 5]);
            b.shell(cells);
            for (i, x0) in (1..31).step_by(5).enumerate() {
                let x1 = (x0 + 5).min(31);
                let paint = if i % 2 == 0 {
                    Paint::Matte { base: [0.55, 0.50, 0.40] }
                } else {
                    Paint::Gloss { base: [0.25, 0.25, 0.30], strength: 0.7, exponent: 6.0 }
                };
                b.block([x0, 0, 1], [x1, 1, 11], paint);
                b.block([x0, 15, 1], [x1, 16, 11], paint);
            }
            for (i, x) in [8, 16, 24].into_iter().enumerate() {
                let paint = if i % 2 == 0 {
                    Paint::Gloss { base: [0.20, 0.30, 0.25], strength: 0.9, exponent: 12.0 }
                } else {
                    Paint::Matte { base: [0.40, 0.45, 0.60] }
                };
                b.block([x, 7, 1], [x + 1, 9, 11], paint);
            }
            Ok(b.finish())
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}
