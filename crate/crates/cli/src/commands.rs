use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;
use viewfield_core::planner::render_utility;
use viewfield_core::renderability::batch_renderability;
use viewfield_core::simulator::{eval_novel_views, panoramic_lattice, run_episode, test_pose_grid, Pose};
use viewfield_core::workload::{keyframe_scaling, query_map, time_batch_query, voxel_state_bytes};
use viewfield_core::world_map::{read_snapshot, write_snapshot};
use viewfield_core::world_map::View;
use viewfield_core::{Lattice, LatticeSpec, PlannerMode, Vec3, WorldMap};

use crate::config::RunConfig;

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// CSV writer whose first line is a `# config_hash=...` comment.
fn csv_with_hash(dir: &Path, name: &str, hash: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let mut out = create(dir, name)?;
    writeln!(out, "# config_hash={hash}")?;
    Ok(csv::Writer::from_writer(out))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn xyz(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

#[derive(Serialize)]
struct TrajectoryRow {
    step: usize,
    kind: &'static str,
    x: f64,
    y: f64,
    z: f64,
    dx: f64,
    dy: f64,
    dz: f64,
    u_g: Option<usize>,
    u_r: Option<f64>,
    u_path: Option<f64>,
    u_view: Option<f64>,
}

pub fn run(cfg: &RunConfig, dir: &Path) -> anyhow::Result<()> {
    let hash = cfg.hash_hex();
    let scene = cfg.build_scene()?;
    let t0 = Instant::now();
    let result = run_episode(&scene, &cfg.episode_config())?;
    let wall = t0.elapsed().as_secs_f64();

    // Index of the planned pose of each plan; waypoint captures fill the gaps.
    let mut planned = vec![None; result.trajectory.len()];
    for (i, plan) in result.plans.iter().enumerate() {
        let end = result.plans.get(i + 1).map_or(result.trajectory.len(), |p| p.step);
        let last = end - 1;
        let d = &plan.decision;
        let pose = &result.trajectory[last];
        if last >= plan.step && pose.position == d.position && pose.direction == d.direction {
            planned[last] = Some(&d.candidates[d.chosen]);
        }
    }

    let mut w = csv_with_hash(dir, "trajectory.csv", &hash)?;
    for (step, (pose, score)) in result.trajectory.iter().zip(&planned).enumerate() {
        let kind = match (step, score) {
            (0, _) => "start",
            (_, Some(_)) => "planned",
            (_, None) => "waypoint",
        };
        w.serialize(TrajectoryRow {
            step,
            kind,
            x: pose.position.x,
            y: pose.position.y,
            z: pose.position.z,
            dx: pose.direction.x,
            dy: pose.direction.y,
            dz: pose.direction.z,
            u_g: score.map(|s| s.u_g),
            u_r: score.map(|s| s.u_r),
            u_path: score.map(|s| s.u_path),
            u_view: score.map(|s| s.u_view),
        })?;
    }
    w.flush()?;

    let mut log = create(dir, "planner_log.jsonl")?;
    for plan in &result.plans {
        let d = &plan.decision;
        let candidates: Vec<_> = d
            .candidates
            .iter()
            .map(|c| {
                json!({
                    "position": xyz(&c.position),
                    "direction": xyz(&c.direction),
                    "u_g": c.u_g,
                    "u_r": c.u_r,
                    "u_path": c.u_path,
                    "u_view": c.u_view,
                })
            })
            .collect();
        let line = json!({
            "config_hash": hash,
            "step": plan.step,
            "seconds": plan.seconds,
            "position": xyz(&d.position),
            "direction": xyz(&d.direction),
            "chosen": d.chosen,
            "discarded": d.discarded,
            "candidates": candidates,
        });
        serde_json::to_writer(&mut log, &line)?;
        writeln!(log)?;
    }
    log.flush()?;

    let mut snap = create(dir, "map.vfm")?;
    write_snapshot(&result.map, &cfg.hash(), &mut snap)?;
    snap.flush()?;

    let m = &result.metrics;
    write_json(
        dir,
        "metrics.json",
        &json!({
            "config_hash": hash,
            "scene": cfg.scene_name(),
            "mode": cfg.planner.mode,
            "frames_captured": result.frames_captured,
            "plans": result.plans.len(),
            "stalled": result.stalled,
            "coverage": m.coverage,
            "mean_frontal_r": m.mean_frontal_r,
            "mean_plan_seconds": m.mean_plan_seconds,
            "map_voxels": result.map.voxel_count(),
            "rgb_clamped": result.map.rgb_clamped(),
            "free_to_occupied": result.ingests.iter().map(|i| i.free_to_occupied).sum::<usize>(),
            "wall_seconds": wall,
        }),
    )?;
    println!(
        "captured {} views on {} (coverage {:.3}); outputs in {}",
        result.frames_captured,
        cfg.scene_name(),
        m.coverage,
        dir.display()
    );
    if let Some(reason) = &result.stalled {
        println!("episode ended early: {reason}");
    }
    Ok(())
}

/// One row of a poses file; extra columns (such as a trajectory's scores)
/// are ignored. `step` is accepted as the id column.
#[derive(Debug, Deserialize)]
pub struct PoseRow {
    #[serde(alias = "step")]
    pub id: Option<String>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

pub fn read_poses(path: &Path) -> anyhow::Result<Vec<(String, Pose)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read poses {}", path.display()))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PoseRow>().enumerate() {
        let row = row.with_context(|| format!("bad pose row {}", i + 1))?;
        let dir = Vec3::new(row.dx, row.dy, row.dz);
        let norm = dir.norm();
        if !(norm.is_finite() && norm > 0.0) {
            bail!("pose row {}: direction must be non-zero", i + 1);
        }
        let pose = Pose {
            position: Vec3::new(row.x, row.y, row.z),
            direction: dir / norm,
        };
        out.push((row.id.unwrap_or_else(|| i.to_string()), pose));
    }
    Ok(out)
}

fn load_snapshot(path: &Path) -> anyhow::Result<(WorldMap, [u8; 32])> {
    let f = File::open(path).with_context(|| format!("cannot open snapshot {}", path.display()))?;
    Ok(read_snapshot(std::io::BufReader::new(f))?)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub u_g: usize,
    pub u_r: f64,
    pub u_path: Option<f64>,
    pub u_view: Option<f64>,
    pub mean_r: f64,
    pub visible: usize,
}

/// Scores each pose against a snapshot. `u_path` is measured from `from`
/// (the first pose when unset) and is empty when unreachable; `mean_r` is
/// the mean renderability of the voxels the pose's view query returns.
pub fn score(
    cfg: &RunConfig,
    dir: &Path,
    snapshot: &Path,
    poses: &Path,
    from: Option<Vec3>,
) -> anyhow::Result<PathBuf> {
    let (map, snap_hash) = load_snapshot(snapshot)?;
    let poses = read_poses(poses)?;
    let planner = cfg.planner_config();
    let pano = panoramic_lattice(cfg.lattice.pano_resolution_deg.to_radians(), &planner)?;
    let mut w = csv_with_hash(dir, "scores.csv", &cfg.hash_hex())?;
    let origin = from.or_else(|| poses.first().map(|(_, p)| p.position));
    if poses.is_empty() {
        w.write_record(["id", "u_g", "u_r", "u_path", "u_view", "mean_r", "visible"])?;
    }
    if let Some(origin) = origin {
        let field = map.distance_field(&origin)?;
        for (id, pose) in &poses {
            let view = match planner.mode {
                PlannerMode::Panoramic => View::Panoramic(&pano),
                PlannerMode::Pinhole | PlannerMode::Random => View::Pinhole(planner.probe(pose.direction)),
            };
            let query = map
                .query_view(&pose.position, &view, planner.max_range)
                .with_context(|| format!("pose {id}"))?;
            let u_g = query.unknown_cells.len();
            let u_r = render_utility(&map, &query, &pose.position);
            let keys: Vec<_> = query.voxels.iter().map(|v| v.key).collect();
            let rs = batch_renderability(&map, &keys, &pose.position);
            let mean_r = if rs.is_empty() { 0.0 } else { rs.iter().sum::<f64>() / rs.len() as f64 };
            let u_path = field.cost(&map, &map.cell_key(&pose.position));
            let u_view = u_path.map(|p| viewfield_core::planner::view_utility(planner.lambda1, planner.lambda2, u_g, u_r, p));
            w.serialize(ScoreRow {
                id: id.clone(),
                u_g,
                u_r,
                u_path,
                u_view,
                mean_r,
                visible: keys.len(),
            })?;
        }
    }
    w.flush()?;
    if snap_hash != cfg.hash() {
        eprintln!("note: snapshot was produced by config {}", hex::encode(snap_hash));
    }
    println!("scored {} poses; wrote {}", poses.len(), dir.join("scores.csv").display());
    Ok(dir.join("scores.csv"))
}

#[derive(Serialize)]
struct ViewRow {
    id: usize,
    x: f64,
    y: f64,
    z: f64,
    dx: f64,
    dy: f64,
    dz: f64,
    visible: usize,
    mean_r: f64,
    mean_deficit: f64,
    mse: f64,
    psnr: Option<f64>,
}

pub fn eval(cfg: &RunConfig, dir: &Path, snapshot: &Path) -> anyhow::Result<()> {
    let hash = cfg.hash_hex();
    let scene = cfg.build_scene()?;
    let (map, snap_hash) = load_snapshot(snapshot)?;
    let poses = test_pose_grid(&scene, cfg.eval.spacing, cfg.eval.clearance);
    let report = eval_novel_views(&scene, &map, &poses, &cfg.intrinsics())?;
    let mut w = csv_with_hash(dir, "eval_views.csv", &hash)?;
    for (id, v) in report.views.iter().enumerate() {
        w.serialize(ViewRow {
            id,
            x: v.pose.position.x,
            y: v.pose.position.y,
            z: v.pose.position.z,
            dx: v.pose.direction.x,
            dy: v.pose.direction.y,
            dz: v.pose.direction.z,
            visible: v.visible,
            mean_r: v.mean_r,
            mean_deficit: v.mean_deficit,
            mse: v.mse,
            psnr: v.psnr,
        })?;
    }
    w.flush()?;
    write_json(
        dir,
        "eval_summary.json",
        &json!({
            "config_hash": hash,
            "snapshot_config_hash": hex::encode(snap_hash),
            "scene": cfg.scene_name(),
            "views": report.views.len(),
            "views_with_voxels": report.views.iter().filter(|v| v.visible > 0).count(),
            "spearman_deficit_mse": report.spearman,
            "pearson_deficit_mse": report.pearson,
            "mean_mse": report.mean_mse,
        }),
    )?;
    println!(
        "evaluated {} views: spearman {} mean mse {:.5}",
        report.views.len(),
        report.spearman.map_or("n/a".into(), |s| format!("{s:.3}")),
        report.mean_mse
    );
    Ok(())
}

pub fn bench(cfg: &RunConfig, dir: &Path) -> anyhow::Result<()> {
    let b = &cfg.bench;
    let hash = cfg.hash_hex();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(b.threads).build()?;
    let workers = pool.current_num_threads();
    let (query, keyframes) = pool.install(|| -> anyhow::Result<_> {
        let mut query = Vec::new();
        for &n in &b.voxel_counts {
            let (map, keys, camera) = query_map(n, b.observations, b.seed)?;
            query.push((n, time_batch_query(&map, &keys, &camera, b.reps)));
        }
        let mut counts = b.keyframe_counts.clone();
        counts.sort_unstable();
        counts.dedup();
        let keyframes = keyframe_scaling(b.keyframe_voxels, &counts, b.window, b.seed)?;
        Ok((query, keyframes))
    })?;
    let state = voxel_state_bytes();

    let mut w = csv_with_hash(dir, "bench_query.csv", &hash)?;
    w.write_record(["voxels", "seconds", "workers"])?;
    for (n, s) in &query {
        w.write_record([n.to_string(), s.to_string(), workers.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_with_hash(dir, "bench_keyframes.csv", &hash)?;
    w.write_record(["keyframes", "seconds_per_frame", "mean_bins", "state_bytes", "workers"])?;
    for k in &keyframes {
        w.write_record([
            k.keyframes.to_string(),
            k.seconds_per_frame.to_string(),
            k.mean_bins.to_string(),
            state.to_string(),
            workers.to_string(),
        ])?;
    }
    w.flush()?;

    let at = |n: usize| keyframes.iter().find(|k| k.keyframes == n).map(|k| k.seconds_per_frame);
    let ratio = match (at(50), at(500)) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    write_json(
        dir,
        "bench.json",
        &json!({
            "config_hash": hash,
            "workers": workers,
            "voxel_state_bytes": state,
            "query": query.iter().map(|(n, s)| json!({"voxels": n, "seconds": s})).collect::<Vec<_>>(),
            "keyframes": keyframes.iter().map(|k| json!({
                "keyframes": k.keyframes,
                "seconds_per_frame": k.seconds_per_frame,
                "mean_bins": k.mean_bins,
            })).collect::<Vec<_>>(),
            "keyframe_ratio_500_over_50": ratio,
        }),
    )?;
    println!("workers: {workers}");
    for (n, s) in &query {
        println!("batch query {n:>7} voxels: {:8.3} ms", s * 1e3);
    }
    for k in &keyframes {
        println!(
            "keyframe {:>4}: {:8.3} ms/frame ({:.1} bins/voxel)",
            k.keyframes,
            k.seconds_per_frame * 1e3,
            k.mean_bins
        );
    }
    println!("voxel state: {state} bytes");
    Ok(())
}

pub fn lattice_info(cfg: &RunConfig) -> anyhow::Result<()> {
    let planner = cfg.planner_config();
    let voxel = Lattice::build(LatticeSpec::Bins(cfg.lattice.voxel_bins))?;
    let pano = panoramic_lattice(cfg.lattice.pano_resolution_deg.to_radians(), &planner)?;
    println!("voxel lattice: N={} bin_radius={:.4} deg", voxel.len(), voxel.bin_radius().to_degrees());
    println!(
        "panoramic lattice: N={} bin_radius={:.4} deg (target resolution {} deg)",
        pano.len(),
        pano.bin_radius().to_degrees(),
        cfg.lattice.pano_resolution_deg
    );
    if let Some(sets) = pano.fov_sets() {
        let sizes: Vec<usize> = sets.iter().map(|s| s.len()).collect();
        let min = sizes.iter().min().copied().unwrap_or(0);
        let max = sizes.iter().max().copied().unwrap_or(0);
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
        println!(
            "fov sets: half_angle={:.4} deg size min={min} mean={mean:.2} max={max}",
            sets.half_angle().to_degrees()
        );
    }
    println!("config_hash={}", cfg.hash_hex());
    Ok(())
}
