//! A loaded scene directory and the one warp path shared by the CLI and the
//! HTTP service.
//!
//! Layout:
//!
//! ```text
//! cameras.json
//! frames/frame_0000.png ...
//! depth/depth_0000.pfm ...      (or depth_0000.png + .scale sidecar)
//! dynamic/mask_0000.png ...     (optional)
//! ```

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use reframe_core::camera::{apply_relative, relative_pose, CameraTrajectory, Intrinsics, PoseSE3, RelativeTransform};
use reframe_core::geometry::{compute_flow, lift_depth, DepthMap, DynamicMask, FlowField, Pointmap};
use reframe_core::io;
use reframe_core::warp::{aggregate_all_frames, forward_warp_with, SplatMode, WarpResult};
use reframe_core::Frame;

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("frames").join(format!("frame_{t:04}.png"))
}

pub fn depth_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("depth").join(format!("depth_{t:04}.pfm"))
}

pub fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("dynamic").join(format!("mask_{t:04}.png"))
}

pub fn cameras_path(dir: &Path) -> PathBuf {
    dir.join("cameras.json")
}

/// Writes a scene in the directory layout above.
pub fn write_scene(
    dir: &Path,
    frames: &[Frame],
    depths: &[DepthMap],
    trajectory: &CameraTrajectory,
    dynamic: &[DynamicMask],
) -> Result<()> {
    for sub in ["frames", "depth", "dynamic"] {
        std::fs::create_dir_all(dir.join(sub)).with_context(|| format!("creating {}", dir.join(sub).display()))?;
    }
    for (t, f) in frames.iter().enumerate() {
        io::write_frame_png(&frame_path(dir, t), f)?;
    }
    for (t, d) in depths.iter().enumerate() {
        io::write_pfm(&depth_path(dir, t), d)?;
    }
    for (t, m) in dynamic.iter().enumerate() {
        io::write_mask_png(&mask_path(dir, t), &m.mask)?;
    }
    io::write_camera_json(&cameras_path(dir), &io::CameraFile::from_trajectory(trajectory))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WarpMode {
    #[default]
    PerFrame,
    AllFrame,
}

impl FromStr for WarpMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per-frame" => Ok(Self::PerFrame),
            "all-frame" => Ok(Self::AllFrame),
            other => Err(format!("unknown mode `{other}` (expected per-frame or all-frame)")),
        }
    }
}

impl fmt::Display for WarpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerFrame => "per-frame",
            Self::AllFrame => "all-frame",
        })
    }
}

/// Where to move the camera of one source frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// Source-camera to target-camera transform.
    Relative(RelativeTransform),
    /// Absolute world-to-camera target pose.
    Pose(PoseSE3),
}

pub struct SceneSession {
    pub id: String,
    pub frames: Vec<Frame>,
    pub depths: Vec<DepthMap>,
    pub trajectory: CameraTrajectory,
    pub dynamic: Vec<DynamicMask>,
    pub camera_points: Vec<Pointmap>,
    pub world_points: Vec<Pointmap>,
}

impl fmt::Debug for SceneSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SceneSession")
            .field("id", &self.id)
            .field("frames", &self.frames.len())
            .finish_non_exhaustive()
    }
}

impl SceneSession {
    pub fn from_parts(
        frames: Vec<Frame>,
        depths: Vec<DepthMap>,
        trajectory: CameraTrajectory,
        dynamic: Option<Vec<DynamicMask>>,
    ) -> Result<Self> {
        let n = trajectory.len();
        let k = trajectory.intrinsics;
        ensure!(frames.len() == n, "{} frames for {n} camera poses", frames.len());
        ensure!(depths.len() == n, "{} depth maps for {n} camera poses", depths.len());
        let dynamic = dynamic.unwrap_or_else(|| vec![DynamicMask::all_static(k.width, k.height); n]);
        ensure!(dynamic.len() == n, "{} dynamic masks for {n} camera poses", dynamic.len());
        for t in 0..n {
            ensure!(frames[t].dims() == k.dims(), "frame {t} is {:?}, intrinsics say {:?}", frames[t].dims(), k.dims());
            ensure!(depths[t].dims() == k.dims(), "depth {t} is {:?}, intrinsics say {:?}", depths[t].dims(), k.dims());
            ensure!(dynamic[t].mask.dims() == k.dims(), "dynamic mask {t} has wrong size");
        }
        let camera_points = depths.iter().map(|d| lift_depth(d, &k, None)).collect::<Result<Vec<_>, _>>()?;
        let world_points = depths
            .iter()
            .zip(&trajectory.poses)
            .map(|(d, e)| lift_depth(d, &k, Some(e)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut h = DefaultHasher::new();
        for f in &frames {
            f.as_slice().hash(&mut h);
        }
        for d in &depths {
            for v in d.values.as_slice() {
                v.to_bits().hash(&mut h);
            }
        }
        Ok(Self {
            id: format!("{:016x}", h.finish()),
            frames,
            depths,
            trajectory,
            dynamic,
            camera_points,
            world_points,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_with_cameras(dir, None)
    }

    /// Loads the scene, taking source cameras from `cameras` instead of the
    /// scene's own cameras.json when given.
    pub fn load_with_cameras(dir: &Path, cameras: Option<&Path>) -> Result<Self> {
        let cam_path = cameras.map(Path::to_path_buf).unwrap_or_else(|| cameras_path(dir));
        let cams = io::read_camera_json(&cam_path).with_context(|| format!("reading {}", cam_path.display()))?;
        let trajectory = cams.to_trajectory()?;
        let n = trajectory.len();
        let mut frames = Vec::with_capacity(n);
        let mut depths = Vec::with_capacity(n);
        let mut dynamic = Vec::with_capacity(n);
        let mut have_masks = true;
        for t in 0..n {
            let fp = frame_path(dir, t);
            frames.push(io::read_frame_png(&fp).with_context(|| format!("reading {}", fp.display()))?);
            let dp = depth_path(dir, t);
            let png = dp.with_extension("png");
            let depth = if dp.exists() {
                io::read_pfm(&dp)?
            } else if png.exists() {
                io::read_depth_png16(&png)?
            } else {
                bail!("missing depth for frame {t}: expected {} or {}", dp.display(), png.display());
            };
            depths.push(depth);
            let mp = mask_path(dir, t);
            if mp.exists() {
                dynamic.push(DynamicMask {
                    mask: io::read_mask_png(&mp)?,
                });
            } else {
                have_masks = false;
            }
        }
        Self::from_parts(frames, depths, trajectory, have_masks.then_some(dynamic))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.trajectory.intrinsics
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        ensure!(frame < self.len(), "frame {frame} out of range (scene has {})", self.len());
        Ok(())
    }

    pub fn relative(&self, frame: usize, target: &Target) -> RelativeTransform {
        match target {
            Target::Relative(r) => *r,
            Target::Pose(p) => relative_pose(&self.trajectory.poses[frame], p),
        }
    }

    pub fn target_pose(&self, frame: usize, target: &Target) -> PoseSE3 {
        match target {
            Target::Relative(r) => apply_relative(&self.trajectory.poses[frame], r),
            Target::Pose(p) => *p,
        }
    }

    pub fn flow(&self, frame: usize, target: &Target) -> Result<FlowField> {
        self.check_frame(frame)?;
        Ok(compute_flow(
            &self.camera_points[frame],
            &self.relative(frame, target),
            self.intrinsics(),
            None,
        )?)
    }

    pub fn preview(&self, frame: usize, target: &Target, mode: WarpMode) -> Result<WarpResult> {
        self.preview_with(frame, target, mode, SplatMode::Nearest)
    }

    pub fn preview_with(&self, frame: usize, target: &Target, mode: WarpMode, splat: SplatMode) -> Result<WarpResult> {
        self.check_frame(frame)?;
        match mode {
            WarpMode::PerFrame => Ok(forward_warp_with(&self.frames[frame], &self.flow(frame, target)?, splat)?),
            WarpMode::AllFrame => {
                ensure!(splat == SplatMode::Nearest, "all-frame aggregation supports nearest splatting only");
                Ok(aggregate_all_frames(
                    &self.frames,
                    &self.world_points,
                    &self.dynamic,
                    frame,
                    &self.target_pose(frame, target),
                    self.intrinsics(),
                )?)
            }
        }
    }
}
