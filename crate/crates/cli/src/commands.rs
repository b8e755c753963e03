use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;

use reframe_core::camera::{
    apply_relative, interpolate_trajectory, preset_trajectory, CameraTrajectory, Intrinsics, PresetKind,
    RelativeTransform,
};
use reframe_core::geometry::{compute_flow, FlowField, PointFrame};
use reframe_core::io::{self, CameraFile, FrameEntry};
use reframe_core::metrics::{
    compensated_mean, difficulty_distortion, psnr, ssim, Distance, MaskKind, MetricReport, MetricSeries,
};
use reframe_core::pe::{coordinate_maps, realign_pe, sinusoidal_pe};
use reframe_core::pose::{pose_from_depth_matches, RansacConfig};
use reframe_core::synth::{make_scene, pan_trajectory, SceneKind};
use reframe_core::warp::{forward_warp_with, SplatMode, WarpResult};
use reframe_core::{Frame, Grid, Mask};

use crate::args::*;
use crate::colorwheel::flow_to_color;
use crate::session::{write_scene, SceneSession, Target, WarpMode};

/// Bad invocation detected after argument parsing (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(usage(format!("input `{}` does not exist", path.display())));
    }
    Ok(())
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn parse_params(raw: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in raw {
        let Some((k, v)) = item.split_once('=') else {
            return Err(usage(format!("--param `{item}` is not KEY=VALUE")));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("--param `{item}`: `{v}` is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

pub fn read_relative(path: &Path) -> Result<RelativeTransform> {
    require_input(path)?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let v = io::parse_json(&bytes, "relative transform json")?;
    Ok(RelativeTransform::new(io::parse_pose_value(&v, "")?))
}

/// Target poses from a camera file: one per frame, or one for all frames.
pub fn read_target_poses(path: &Path, frames: usize) -> Result<Vec<Target>> {
    require_input(path)?;
    let file = io::read_camera_json(path)?;
    let traj = file.to_trajectory()?;
    match traj.len() {
        1 => Ok(vec![Target::Pose(traj.poses[0]); frames]),
        n if n == frames => Ok(traj.poses.into_iter().map(Target::Pose).collect()),
        n => bail!("target trajectory has {n} poses, scene has {frames} frames"),
    }
}

fn flo_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("flow_{t:04}.flo"))
}

fn target_depth_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("target_depth_{t:04}.camt"))
}

fn pointmap_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("pointmap_{t:04}.camt"))
}

/// Reads a flow written by `flow`, restoring the target depth used for
/// z-buffering.
pub fn read_flow_dir(dir: &Path, t: usize) -> Result<FlowField> {
    let mut flow = io::read_flo(&flo_path(dir, t))?;
    let depth = io::tensor_to_depth(&io::read_camt(&target_depth_path(dir, t))?)?;
    ensure!(depth.dims() == flow.dims(), "target depth {t} does not match its flow");
    flow.target_depth = depth.values;
    Ok(flow)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let kind: SceneKind = a.scene.parse().map_err(|e: reframe_core::Error| usage(e.to_string()))?;
    ensure!(a.frames > 0, "--frames must be positive");
    let params = parse_params(&a.params)?;
    let k = Intrinsics::new(
        a.focal,
        a.focal,
        (a.width as f64 - 1.0) / 2.0,
        (a.height as f64 - 1.0) / 2.0,
        a.width,
        a.height,
    )?;
    let traj = pan_trajectory(k, a.frames, a.pan)?;
    let scene = make_scene(kind, &params, a.frames, &traj)?;
    write_scene(&a.out, &scene.frames, &scene.depths, &scene.trajectory, &scene.dynamic_masks)?;
    println!("wrote {} frames of {kind} to {}", scene.len(), a.out.display());
    Ok(())
}

pub fn lift(a: &LiftArgs) -> Result<()> {
    require_input(&a.scene)?;
    let s = SceneSession::load(&a.scene)?;
    create_out(&a.out)?;
    let maps = match a.space {
        Space::World => &s.world_points,
        Space::Camera => &s.camera_points,
    };
    for (t, pm) in maps.iter().enumerate() {
        io::write_camt(&pointmap_path(&a.out, t), &io::pointmap_to_tensor(pm))?;
    }
    println!("wrote {} pointmaps to {}", maps.len(), a.out.display());
    Ok(())
}

fn targets(s: &SceneSession, target: Option<&Path>, rel: Option<&Path>) -> Result<Vec<Target>> {
    match (target, rel) {
        (Some(p), None) => read_target_poses(p, s.len()),
        (None, Some(p)) => Ok(vec![Target::Relative(read_relative(p)?); s.len()]),
        _ => Err(usage("exactly one of --target or --rel is required")),
    }
}

pub fn flow(a: &FlowArgs) -> Result<()> {
    require_input(&a.scene)?;
    if let Some(c) = &a.camera {
        require_input(c)?;
    }
    let s = SceneSession::load_with_cameras(&a.scene, a.camera.as_deref())?;
    let targets = targets(&s, a.target.target.as_deref(), a.target.rel.as_deref())?;
    create_out(&a.out)?;
    let k = *s.intrinsics();
    for (t, target) in targets.iter().enumerate() {
        let flow = match &a.pointmaps {
            None => s.flow(t, target)?,
            Some(dir) => {
                require_input(dir)?;
                let frame = match a.space {
                    Space::World => PointFrame::World,
                    Space::Camera => PointFrame::SourceCamera,
                };
                let pm = io::tensor_to_pointmap(&io::read_camt(&pointmap_path(dir, t))?, frame)?;
                compute_flow(&pm, &s.relative(t, target), &k, Some(&s.trajectory.poses[t]))?
            }
        };
        io::write_flo(&flo_path(&a.out, t), &flow)?;
        io::write_camt(&target_depth_path(&a.out, t), &io::depth_to_tensor(&flow.target_depth))?;
        if a.vis {
            io::write_frame_png(&a.out.join(format!("flow_{t:04}.png")), &flow_to_color(&flow))?;
        }
    }
    println!("wrote {} flows to {}", targets.len(), a.out.display());
    Ok(())
}

enum WarpSource {
    Targets(Vec<Target>),
    FlowDir(PathBuf),
}

fn warp_source(s: &SceneSession, t: &WarpTarget) -> Result<WarpSource> {
    match (&t.target, &t.rel, &t.flow) {
        (Some(p), None, None) => Ok(WarpSource::Targets(read_target_poses(p, s.len())?)),
        (None, Some(p), None) => Ok(WarpSource::Targets(vec![Target::Relative(read_relative(p)?); s.len()])),
        (None, None, Some(d)) => {
            require_input(d)?;
            Ok(WarpSource::FlowDir(d.clone()))
        }
        _ => Err(usage("exactly one of --target, --rel or --flow is required")),
    }
}

fn frame_selection(s: &SceneSession, frame: Option<usize>) -> Result<Vec<usize>> {
    match frame {
        Some(f) if f >= s.len() => Err(usage(format!("--frame {f} out of range (scene has {})", s.len()))),
        Some(f) => Ok(vec![f]),
        None => Ok((0..s.len()).collect()),
    }
}

/// One warped frame as written to disk and reported.
pub struct WarpOutput {
    pub index: usize,
    pub result: WarpResult,
}

pub fn warp_frames(s: &SceneSession, a: &WarpArgs) -> Result<Vec<WarpOutput>> {
    let mode = match a.mode {
        ModeArg::PerFrame => WarpMode::PerFrame,
        ModeArg::AllFrame => WarpMode::AllFrame,
    };
    let splat = match a.splat {
        SplatArg::Nearest => SplatMode::Nearest,
        SplatArg::Bilinear => SplatMode::Bilinear,
    };
    let source = warp_source(s, &a.target)?;
    let mut out = Vec::new();
    for t in frame_selection(s, a.frame)? {
        let result = match &source {
            WarpSource::Targets(ts) => s.preview_with(t, &ts[t], mode, splat)?,
            WarpSource::FlowDir(dir) => {
                if mode == WarpMode::AllFrame {
                    return Err(usage("--mode all-frame needs target cameras (--target or --rel), not --flow"));
                }
                forward_warp_with(&s.frames[t], &read_flow_dir(dir, t)?, splat)?
            }
        };
        out.push(WarpOutput { index: t, result });
    }
    Ok(out)
}

pub fn warp(a: &WarpArgs) -> Result<()> {
    require_input(&a.scene)?;
    let s = SceneSession::load(&a.scene)?;
    let outputs = warp_frames(&s, a)?;
    create_out(&a.out)?;
    let mut rows = Vec::new();
    let mut fractions = Vec::new();
    for o in &outputs {
        let t = o.index;
        io::write_frame_png(&a.out.join(format!("warped_{t:04}.png")), &o.result.image)?;
        io::write_mask_png(&a.out.join(format!("holes_{t:04}.png")), &o.result.hole_mask)?;
        io::write_camt(
            &a.out.join(format!("depth_{t:04}.camt")),
            &io::depth_to_tensor(&o.result.depth_buffer),
        )?;
        let hf = o.result.hole_fraction();
        println!("frame {t:04} hole_fraction {hf}");
        rows.push(json!({"index": t, "hole_fraction": hf}));
        fractions.push(hf);
    }
    let mean = compensated_mean(&fractions);
    println!("mean_hole_fraction {mean}");
    let mode = match a.mode {
        ModeArg::PerFrame => WarpMode::PerFrame,
        ModeArg::AllFrame => WarpMode::AllFrame,
    };
    let report = json!({"mode": mode.to_string(), "frames": rows, "mean_hole_fraction": mean});
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    std::fs::write(a.out.join("warp_report.json"), bytes)?;
    Ok(())
}

pub fn pose(a: &PoseArgs, seed: u64) -> Result<()> {
    require_input(&a.scene)?;
    require_input(&a.matches)?;
    let s = SceneSession::load(&a.scene)?;
    if a.frame >= s.len() {
        return Err(usage(format!("--frame {} out of range (scene has {})", a.frame, s.len())));
    }
    let matches = io::read_matches(&a.matches)?;
    let cfg = RansacConfig {
        inlier_threshold: a.threshold,
        confidence: a.confidence,
        max_iterations: a.max_iterations,
        seed,
        ..RansacConfig::default()
    };
    let (rel, res) = pose_from_depth_matches(&s.depths[a.frame], &matches, s.intrinsics(), &cfg)?;
    let target = apply_relative(&s.trajectory.poses[a.frame], &rel);
    let mut file = CameraFile::from_trajectory(&s.trajectory);
    file.frames = vec![FrameEntry::from_pose(a.frame, &target)];
    io::write_camera_json(&a.out, &file)?;
    println!(
        "inliers {}/{} after {} iterations",
        res.inliers.len(),
        matches.len(),
        res.iterations
    );
    Ok(())
}

fn base_trajectory(a: &TrajArgs) -> Result<Option<CameraTrajectory>> {
    if let Some(c) = &a.camera {
        require_input(c)?;
        return Ok(Some(io::read_camera_json(c)?.to_trajectory()?));
    }
    if let Some(dir) = &a.scene {
        let p = crate::session::cameras_path(dir);
        require_input(&p)?;
        return Ok(Some(io::read_camera_json(&p)?.to_trajectory()?));
    }
    Ok(None)
}

pub fn traj(a: &TrajArgs) -> Result<()> {
    let base = base_trajectory(a)?;
    let out = if let Some(preset) = a.source.preset {
        let kind = match preset {
            PresetArg::Orbit => PresetKind::Orbit,
            PresetArg::Dolly => PresetKind::Dolly,
            PresetArg::Truck => PresetKind::Truck,
            PresetArg::Arc => PresetKind::Arc,
            PresetArg::Static => PresetKind::Static,
        };
        let base = match base {
            Some(b) => b,
            None => CameraTrajectory::stationary(reframe_core::synth::default_intrinsics(), 1)?,
        };
        let frames = a.frames.unwrap_or(if base.len() > 1 {
            base.len()
        } else {
            reframe_core::synth::DEFAULT_FRAMES
        });
        preset_trajectory(kind, &parse_params(&a.params)?, frames, &base)?
    } else {
        let path = a.source.keyframes.as_ref().expect("clap enforces one source");
        require_input(path)?;
        let file = io::read_camera_json(path)?;
        let keys = file
            .frames
            .iter()
            .map(|f| Ok((f.index, f.pose()?)))
            .collect::<Result<Vec<_>>>()?;
        let last = keys.iter().map(|(i, _)| *i).max().unwrap_or(0);
        let frames = a.frames.or(base.as_ref().map(|b| b.len())).unwrap_or(last + 1);
        let k = base.map(|b| b.intrinsics).unwrap_or_else(|| file.intrinsics());
        let mut keys = keys;
        keys.sort_by_key(|(i, _)| *i);
        CameraTrajectory::new(k, interpolate_trajectory(&keys, frames)?)?
    };
    io::write_camera_json(&a.out, &CameraFile::from_trajectory(&out))?;
    println!("wrote {} poses to {}", out.len(), a.out.display());
    Ok(())
}

pub fn pe(a: &PeArgs) -> Result<()> {
    require_input(&a.scene)?;
    let s = SceneSession::load(&a.scene)?;
    let source = warp_source(&s, &a.target)?;
    let (w, h) = s.intrinsics().dims();
    let pe = sinusoidal_pe(h, w, a.channels, a.base).map_err(|e| usage(e.to_string()))?;
    create_out(&a.out)?;
    io::write_camt(&a.out.join("pe_source.camt"), &io::feature_map_to_tensor(&pe.values))?;
    for t in 0..s.len() {
        let flow = match &source {
            WarpSource::Targets(ts) => s.flow(t, &ts[t])?,
            WarpSource::FlowDir(dir) => read_flow_dir(dir, t)?,
        };
        let (re, valid) = realign_pe(&pe, &flow)?;
        let (ident, warped, _) = coordinate_maps(h, w, &flow)?;
        if t == 0 {
            io::write_camt(&a.out.join("coords_identity.camt"), &io::feature_map_to_tensor(&ident))?;
        }
        io::write_camt(&a.out.join(format!("pe_{t:04}.camt")), &io::feature_map_to_tensor(&re.values))?;
        io::write_camt(&a.out.join(format!("coords_{t:04}.camt")), &io::feature_map_to_tensor(&warped))?;
        io::write_mask_png(&a.out.join(format!("pe_valid_{t:04}.png")), &valid)?;
    }
    println!("wrote {} re-aligned encodings to {}", s.len(), a.out.display());
    Ok(())
}

/// PNGs in `dir` sorted by name; when any carry `prefix` only those are kept,
/// so a `warp` output directory can be passed as is.
fn png_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    require_input(dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let has_prefix = |p: &PathBuf| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix));
    if files.iter().any(has_prefix) {
        files.retain(has_prefix);
    }
    Ok(files)
}

fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    png_files(dir, "warped_")?.iter().map(|p| Ok(io::read_frame_png(p)?)).collect()
}

pub fn eval_report(a: &EvalArgs) -> Result<MetricReport> {
    let pred = read_frames(&a.pred)?;
    let gt = read_frames(&a.gt)?;
    ensure!(!pred.is_empty(), "no PNG frames in {}", a.pred.display());
    ensure!(
        pred.len() == gt.len(),
        "{} predicted frames but {} reference frames",
        pred.len(),
        gt.len()
    );
    let mask_kind: MaskKind = a.mask.parse().map_err(|e: reframe_core::Error| usage(e.to_string()))?;
    let masks: Vec<Option<Mask>> = match mask_kind {
        MaskKind::Full => vec![None; pred.len()],
        kind => {
            let Some(dir) = &a.holes else {
                return Err(usage(format!("--mask {kind} needs --holes")));
            };
            let holes = png_files(dir, "holes_")?
                .iter()
                .map(|p| Ok(io::read_mask_png(p)?))
                .collect::<Result<Vec<Grid<bool>>>>()?;
            ensure!(holes.len() == pred.len(), "{} hole masks for {} frames", holes.len(), pred.len());
            holes
                .into_iter()
                .map(|h| Some(if kind == MaskKind::Occluded { h } else { h.map(|v| !v) }))
                .collect()
        }
    };
    let mut report = MetricReport {
        mask: mask_kind,
        ..MetricReport::default()
    };
    for name in &a.metrics {
        let f: fn(&Frame, &Frame, Option<&Mask>) -> reframe_core::Result<f64> = match name.trim() {
            "psnr" => psnr,
            "ssim" => ssim,
            other => return Err(usage(format!("unknown metric `{other}` (expected psnr or ssim)"))),
        };
        // a frame whose mask is empty has no value (null in the report)
        let per_frame: Vec<f64> = pred
            .iter()
            .zip(&gt)
            .zip(&masks)
            .map(|((p, g), m)| match m {
                Some(m) if m.count() == 0 => Ok(f64::NAN),
                m => f(p, g, m.as_ref()),
            })
            .collect::<reframe_core::Result<_>>()?;
        let defined: Vec<f64> = per_frame.iter().copied().filter(|v| v.is_finite()).collect();
        let mean = if defined.is_empty() { f64::NAN } else { compensated_mean(&defined) };
        report.metrics.insert(name.trim().to_string(), MetricSeries { per_frame, mean });
    }
    if let Some(input) = &a.input {
        let inputs = read_frames(input)?;
        ensure!(inputs.len() == pred.len(), "{} input frames for {} predictions", inputs.len(), pred.len());
        let distance: Distance = a.distance.parse().map_err(|e: reframe_core::Error| usage(e.to_string()))?;
        let triples: Vec<(Frame, Frame, Frame)> = inputs
            .into_iter()
            .zip(pred)
            .zip(gt)
            .map(|((i, p), g)| (i, p, g))
            .collect();
        report.curve = difficulty_distortion(&triples, distance, a.bins)?;
    }
    Ok(report)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let report = eval_report(a)?;
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    match &a.out {
        Some(p) => std::fs::write(p, &bytes).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    for (name, series) in &report.metrics {
        eprintln!("{name} mean {}", series.mean);
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    require_input(&a.scene)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::service::serve(a.scene.clone(), &a.host, a.port, a.allow_origin.clone()))
}
