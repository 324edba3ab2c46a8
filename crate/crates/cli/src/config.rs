//! Run configuration: a TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use viewfield_core::simulator::{build_scene, Budget, EpisodeConfig, Scene};
use viewfield_core::{Intrinsics, PlannerConfig, PlannerMode};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneSection,
    pub planner: PlannerSection,
    pub lattice: LatticeSection,
    pub budget: BudgetSection,
    pub camera: CameraSection,
    pub episode: EpisodeSection,
    pub eval: EvalSection,
    pub bench: BenchSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    /// Preset name; `box_room` when neither this nor `file` is given.
    pub preset: Option<String>,
    /// Scene text file, exclusive with `preset`.
    pub file: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub mode: PlannerMode,
    pub lambda1: f64,
    pub lambda2: f64,
    pub candidate_count: usize,
    pub candidate_radius: f64,
    pub max_range: f64,
    pub directions_per_position: usize,
    pub probe_resolution: u32,
    pub seed: u64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let p = PlannerConfig::default();
        Self {
            mode: p.mode,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            candidate_count: p.candidate_count,
            candidate_radius: p.candidate_radius,
            max_range: p.max_range,
            directions_per_position: p.directions_per_position,
            probe_resolution: p.probe_resolution,
            seed: p.rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub voxel_bins: usize,
    pub pano_resolution_deg: f64,
    /// FoV-set cone; derived from the camera diagonal when unset.
    pub fov_half_angle_deg: Option<f64>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            voxel_bins: 64,
            pano_resolution_deg: 10.0,
            fov_half_angle_deg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub max_views: usize,
    pub max_seconds: Option<f64>,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            max_views: 20,
            max_seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub width: u32,
    pub height: u32,
    pub fov_x_deg: f64,
    pub fov_y_deg: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_x_deg: 60.0,
            fov_y_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub waypoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub spacing: f64,
    pub clearance: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            spacing: 0.8,
            clearance: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub voxel_counts: Vec<usize>,
    pub observations: usize,
    pub reps: usize,
    pub keyframe_counts: Vec<usize>,
    pub keyframe_voxels: usize,
    pub window: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            voxel_counts: vec![1_000, 10_000, 100_000],
            observations: 6,
            reps: 5,
            keyframe_counts: vec![10, 50, 100, 200, 500],
            keyframe_voxels: 2_000,
            window: 9,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Parses `text` and applies dotted-key overrides such as
/// `planner.mode=pinhole` or `bench.voxel_counts=[1000]`.
pub fn parse(text: &str, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .with_context(|| format!("override `{item}` is not KEY=VALUE"))?;
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let cfg: RunConfig = toml::from_str(&toml::to_string(&table)?).context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?,
        None => String::new(),
    };
    parse(&text, overrides)
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("invalid override key `{key}`");
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("override `{key}`: `{part}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.scene.preset.is_some() && self.scene.file.is_some() {
            bail!("scene.preset and scene.file are exclusive");
        }
        if self.budget.max_views == 0 {
            bail!("budget.max_views must be >= 1");
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            bail!("camera resolution must be positive");
        }
        if !(self.camera.fov_x_deg > 0.0 && self.camera.fov_x_deg < 180.0 && self.camera.fov_y_deg > 0.0 && self.camera.fov_y_deg < 180.0) {
            bail!("camera FoV must lie in (0, 180) degrees");
        }
        if !(self.lattice.pano_resolution_deg > 0.0) || self.lattice.voxel_bins == 0 {
            bail!("lattice sizes must be positive");
        }
        if !(self.eval.spacing > 0.0 && self.eval.clearance >= 0.0) {
            bail!("eval.spacing must be positive and eval.clearance non-negative");
        }
        if self.bench.threads == 0 || self.bench.reps == 0 {
            bail!("bench.threads and bench.reps must be >= 1");
        }
        self.planner_config().validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output location.
    pub fn hash(&self) -> [u8; 32] {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        let json = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(&json).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    pub fn planner_config(&self) -> PlannerConfig {
        let p = &self.planner;
        let half_x = (self.camera.fov_x_deg / 2.0).to_radians();
        let half_y = (self.camera.fov_y_deg / 2.0).to_radians();
        let cone = match self.lattice.fov_half_angle_deg {
            Some(d) => d.to_radians(),
            None => half_x.tan().hypot(half_y.tan()).atan(),
        };
        PlannerConfig {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            candidate_count: p.candidate_count,
            candidate_radius: p.candidate_radius,
            mode: p.mode,
            half_fov_x: half_x,
            half_fov_y: half_y,
            fov_half_angle: cone,
            max_range: p.max_range,
            directions_per_position: p.directions_per_position,
            probe_resolution: p.probe_resolution,
            rng_seed: p.seed,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let c = &self.camera;
        Intrinsics::from_fov(c.width, c.height, c.fov_x_deg.to_radians(), c.fov_y_deg.to_radians())
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        let mut cfg = EpisodeConfig::new(self.planner_config(), self.budget.max_views);
        cfg.budget = Budget {
            max_views: self.budget.max_views,
            max_seconds: self.budget.max_seconds,
        };
        cfg.intrinsics = self.intrinsics();
        cfg.waypoint_every = self.episode.waypoint_every;
        cfg.voxel_bins = self.lattice.voxel_bins;
        cfg.pano_resolution = self.lattice.pano_resolution_deg.to_radians();
        cfg
    }

    pub fn scene_name(&self) -> String {
        match (&self.scene.preset, &self.scene.file) {
            (_, Some(f)) => f.display().to_string(),
            (Some(p), None) => p.clone(),
            (None, None) => "box_room".into(),
        }
    }

    pub fn build_scene(&self) -> anyhow::Result<Scene> {
        if let Some(path) = &self.scene.file {
            let f = std::fs::File::open(path).with_context(|| format!("cannot open scene {}", path.display()))?;
            return Ok(Scene::read_text(std::io::BufReader::new(f))?);
        }
        Ok(build_scene(&self.scene_name(), self.scene.seed)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = parse("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.lattice.voxel_bins, 64);
        let p = cfg.planner_config();
        assert_eq!(p, PlannerConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let cfg = parse(
            "[planner]\nmode = \"random\"\n",
            &["planner.mode=pinhole".into(), "bench.voxel_counts=[10, 20]".into(), "scene.preset=two_rooms".into()],
        )
        .unwrap();
        assert_eq!(cfg.planner.mode, PlannerMode::Pinhole);
        assert_eq!(cfg.bench.voxel_counts, vec![10, 20]);
        assert_eq!(cfg.scene.preset.as_deref(), Some("two_rooms"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse("[planner]\nbogus = 1\n", &[]).is_err());
        assert!(parse("[budget]\nmax_views = 0\n", &[]).is_err());
        assert!(parse("not toml [", &[]).is_err());
        assert!(parse("", &["planner".into()]).is_err());
        assert!(parse("", &["scene.preset=x".into(), "scene.file=y".into()]).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = parse("", &[]).unwrap();
        let b = parse("", &["output.dir=elsewhere".into()]).unwrap();
        let c = parse("", &["planner.seed=3".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash_hex().len(), 64);
    }
}
