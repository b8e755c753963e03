//! Procedural scenes with closed-form geometry and textures.
//!
//! Scenes are built from fronto-parallel planes, spheres and axis-aligned
//! boxes in world coordinates and rendered by exact ray casting (one ray
//! through each pixel center), so depth is analytic and rendering is
//! bit-deterministic. Textures are smoothed checkers (a `tanh` of products
//! of sines), band-limited enough that sub-pixel resampling error stays
//! small.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};

use crate::camera::{project, relative_pose, CameraTrajectory, Intrinsics, PoseSE3, MIN_DEPTH};
use crate::geometry::{DepthMap, DynamicMask, FlowField};
use crate::grid::{Frame, Grid, Mask};
use crate::{Error, Result};

/// Desk-scale default image size.
pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 96;
/// Frames generated per clip by default.
pub const DEFAULT_FRAMES: usize = 12;

/// Intrinsics for the default 128×96 clips, principal point at the center.
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 100.0,
        fy: 100.0,
        cx: (DEFAULT_WIDTH as f64 - 1.0) / 2.0,
        cy: (DEFAULT_HEIGHT as f64 - 1.0) / 2.0,
        width: DEFAULT_WIDTH,
        height: DEFAULT_HEIGHT,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    CheckerPlane,
    TwoPlanes,
    TexturedSphere,
    MovingBox,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checker_plane" => Ok(Self::CheckerPlane),
            "two_planes" => Ok(Self::TwoPlanes),
            "textured_sphere" => Ok(Self::TexturedSphere),
            "moving_box" => Ok(Self::MovingBox),
            other => Err(Error::invalid(format!(
                "unknown scene `{other}` (expected checker_plane, two_planes, textured_sphere or moving_box)"
            ))),
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CheckerPlane => "checker_plane",
            Self::TwoPlanes => "two_planes",
            Self::TexturedSphere => "textured_sphere",
            Self::MovingBox => "moving_box",
        })
    }
}

impl SceneKind {
    fn defaults(&self) -> &'static [(&'static str, f64)] {
        match self {
            Self::CheckerPlane => &[("depth", 5.0), ("period", 1.0), ("sharpness", 2.0)],
            Self::TwoPlanes => &[
                ("near_depth", 2.0),
                ("far_depth", 4.0),
                ("near_edge", 0.0),
                ("period", 1.0),
                ("sharpness", 2.0),
            ],
            Self::TexturedSphere => &[
                ("sphere_depth", 4.0),
                ("radius", 1.0),
                ("background_depth", 8.0),
                ("period", 1.0),
                ("sharpness", 2.0),
            ],
            Self::MovingBox => &[
                ("box_depth", 3.0),
                ("box_size", 1.0),
                ("box_x", 0.0),
                ("box_y", 0.0),
                ("velocity_x", 0.1),
                ("velocity_y", 0.0),
                ("velocity_z", 0.0),
                ("background_depth", 6.0),
                ("period", 1.0),
                ("sharpness", 2.0),
            ],
        }
    }
}

/// Smoothed checker: `base + amplitude · tanh(k·s(x)·s(y)) / tanh(k)` with
/// `s(q) = sin(π q / period)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Texture {
    pub base: [f64; 3],
    pub amplitude: [f64; 3],
    pub period: f64,
    pub sharpness: f64,
}

impl Texture {
    fn shade(&self, pattern: f64) -> [u8; 3] {
        let p = (self.sharpness * pattern).tanh() / self.sharpness.tanh();
        let ch = |c: usize| (self.base[c] + self.amplitude[c] * p).round().clamp(0.0, 255.0) as u8;
        [ch(0), ch(1), ch(2)]
    }

    fn wave(&self, q: f64) -> f64 {
        (std::f64::consts::PI * q / self.period).sin()
    }

    pub fn sample2(&self, s: f64, t: f64) -> [u8; 3] {
        self.shade(self.wave(s) * self.wave(t))
    }

    /// Solid texture for curved or multi-faced primitives.
    pub fn sample3(&self, p: &Vector3<f64>) -> [u8; 3] {
        let w = (self.wave(p.x) * self.wave(p.y) + self.wave(p.y) * self.wave(p.z) + self.wave(p.z) * self.wave(p.x)) / 3.0;
        self.shade(3.0 * w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// World plane `z = depth` restricted to the given x/y ranges.
    Plane {
        depth: f64,
        x_range: (f64, f64),
        y_range: (f64, f64),
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Axis-aligned box, translated by `velocity · t` at frame `t`.
    MovingBox {
        min: Vector3<f64>,
        max: Vector3<f64>,
        velocity: Vector3<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
    pub dynamic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Camera z-depth of the hit.
    pub depth: f64,
    pub primitive: usize,
    pub point: Vector3<f64>,
}

impl Primitive {
    /// Ray parameter of the first hit, where `dir` has unit camera-z so the
    /// parameter equals camera depth.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, time: f64) -> Option<f64> {
        match &self.shape {
            Shape::Plane {
                depth,
                x_range,
                y_range,
            } => {
                if dir.z == 0.0 {
                    return None;
                }
                let lambda = (depth - origin.z) / dir.z;
                if !(lambda > MIN_DEPTH) {
                    return None;
                }
                let p = origin + dir * lambda;
                (p.x >= x_range.0 && p.x <= x_range.1 && p.y >= y_range.0 && p.y <= y_range.1).then_some(lambda)
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = 2.0 * dir.dot(&oc);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let near = (-b - sq) / (2.0 * a);
                let far = (-b + sq) / (2.0 * a);
                if near > MIN_DEPTH {
                    Some(near)
                } else if far > MIN_DEPTH {
                    Some(far)
                } else {
                    None
                }
            }
            Shape::MovingBox { min, max, velocity } => {
                let lo = min + velocity * time;
                let hi = max + velocity * time;
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if origin[a] < lo[a] || origin[a] > hi[a] {
                            return None;
                        }
                        continue;
                    }
                    let ta = (lo[a] - origin[a]) / dir[a];
                    let tb = (hi[a] - origin[a]) / dir[a];
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                (t1 >= t0 && t0 > MIN_DEPTH).then_some(t0)
            }
        }
    }

    fn color(&self, p: &Vector3<f64>, time: f64) -> [u8; 3] {
        match &self.shape {
            Shape::Plane { .. } => self.texture.sample2(p.x, p.y),
            Shape::Sphere { center, .. } => self.texture.sample3(&(p - center)),
            Shape::MovingBox { min, velocity, .. } => self.texture.sample3(&(p - min - velocity * time)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDescription {
    pub kind: SceneKind,
    pub params: BTreeMap<String, f64>,
    pub primitives: Vec<Primitive>,
}

const FAR: f64 = 1e4;

fn resolve_params(kind: SceneKind, params: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = kind.defaults().iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in params {
        if !out.contains_key(k) {
            return Err(Error::invalid(format!("{kind} does not take parameter `{k}`")));
        }
        if !v.is_finite() {
            return Err(Error::invalid(format!("parameter `{k}` must be finite")));
        }
        out.insert(k.clone(), *v);
    }
    for key in ["period", "sharpness"] {
        if out[key] <= 0.0 {
            return Err(Error::invalid(format!("parameter `{key}` must be positive")));
        }
    }
    Ok(out)
}

impl SceneDescription {
    pub fn new(kind: SceneKind, params: &BTreeMap<String, f64>) -> Result<Self> {
        let p = resolve_params(kind, params)?;
        let tex = |base: [f64; 3], amplitude: [f64; 3]| Texture {
            base,
            amplitude,
            period: p["period"],
            sharpness: p["sharpness"],
        };
        let everywhere = (-FAR, FAR);
        let positive = |key: &str| -> Result<f64> {
            let v = p[key];
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::invalid(format!("parameter `{key}` must be positive, got {v}")))
            }
        };
        let primitives = match kind {
            SceneKind::CheckerPlane => vec![Primitive {
                shape: Shape::Plane {
                    depth: positive("depth")?,
                    x_range: everywhere,
                    y_range: everywhere,
                },
                texture: tex([128.0, 128.0, 128.0], [100.0, 90.0, 80.0]),
                dynamic: false,
            }],
            SceneKind::TwoPlanes => {
                let near = positive("near_depth")?;
                let far = positive("far_depth")?;
                if near >= far {
                    return Err(Error::invalid("near_depth must be smaller than far_depth"));
                }
                vec![
                    Primitive {
                        shape: Shape::Plane {
                            depth: near,
                            x_range: (-FAR, p["near_edge"]),
                            y_range: everywhere,
                        },
                        texture: tex([110.0, 135.0, 150.0], [60.0, 55.0, 50.0]),
                        dynamic: false,
                    },
                    Primitive {
                        shape: Shape::Plane {
                            depth: far,
                            x_range: everywhere,
                            y_range: everywhere,
                        },
                        texture: tex([150.0, 125.0, 105.0], [60.0, 55.0, 50.0]),
                        dynamic: false,
                    },
                ]
            }
            SceneKind::TexturedSphere => {
                let d = positive("sphere_depth")?;
                let r = positive("radius")?;
                let bg = positive("background_depth")?;
                if r >= d || bg <= d + r {
                    return Err(Error::invalid(
                        "sphere must lie in front of the camera and before the background",
                    ));
                }
                vec![
                    Primitive {
                        shape: Shape::Sphere {
                            center: Vector3::new(0.0, 0.0, d),
                            radius: r,
                        },
                        texture: tex([200.0, 110.0, 70.0], [50.0, 60.0, 50.0]),
                        dynamic: false,
                    },
                    Primitive {
                        shape: Shape::Plane {
                            depth: bg,
                            x_range: everywhere,
                            y_range: everywhere,
                        },
                        texture: tex([90.0, 120.0, 100.0], [60.0, 60.0, 60.0]),
                        dynamic: false,
                    },
                ]
            }
            SceneKind::MovingBox => {
                let d = positive("box_depth")?;
                let s = positive("box_size")?;
                let bg = positive("background_depth")?;
                if bg <= d + s / 2.0 {
                    return Err(Error::invalid("box must lie before the background"));
                }
                let c = Vector3::new(p["box_x"], p["box_y"], d);
                let half = Vector3::repeat(s / 2.0);
                vec![
                    Primitive {
                        shape: Shape::MovingBox {
                            min: c - half,
                            max: c + half,
                            velocity: Vector3::new(p["velocity_x"], p["velocity_y"], p["velocity_z"]),
                        },
                        texture: tex([220.0, 200.0, 60.0], [35.0, 40.0, 40.0]),
                        dynamic: true,
                    },
                    Primitive {
                        shape: Shape::Plane {
                            depth: bg,
                            x_range: everywhere,
                            y_range: everywhere,
                        },
                        texture: tex([100.0, 110.0, 140.0], [60.0, 60.0, 60.0]),
                        dynamic: false,
                    },
                ]
            }
        };
        Ok(Self {
            kind,
            params: p,
            primitives,
        })
    }

    /// Nearest hit along the ray through continuous pixel `pixel`.
    pub fn cast(&self, pose: &PoseSE3, k: &Intrinsics, pixel: &Vector2<f64>, time: usize) -> Option<Hit> {
        let origin = pose.center();
        let ray_cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        let dir = pose.rotation().transpose() * ray_cam;
        let t = time as f64;
        let mut best: Option<(f64, usize)> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some(l) = prim.intersect(&origin, &dir, t) {
                if best.is_none_or(|(b, _)| l < b) {
                    best = Some((l, i));
                }
            }
        }
        best.map(|(depth, primitive)| Hit {
            depth,
            primitive,
            point: origin + dir * depth,
        })
    }
}

/// Per-pixel render output including which primitive was hit.
#[derive(Clone, Debug, PartialEq)]
pub struct Render {
    pub frame: Frame,
    pub depth: DepthMap,
    pub labels: Grid<Option<usize>>,
}

pub fn render_description(desc: &SceneDescription, pose: &PoseSE3, k: &Intrinsics, time: usize) -> Render {
    let (w, h) = k.dims();
    let mut frame = Grid::new(w, h, [0u8; 3]);
    let mut depth = Grid::new(w, h, 0.0);
    let mut labels = Grid::new(w, h, None);
    for y in 0..h {
        for x in 0..w {
            if let Some(hit) = desc.cast(pose, k, &Vector2::new(x as f64, y as f64), time) {
                frame.set(x, y, desc.primitives[hit.primitive].color(&hit.point, time as f64));
                depth.set(x, y, hit.depth);
                labels.set(x, y, Some(hit.primitive));
            }
        }
    }
    Render {
        frame,
        depth: DepthMap::from_values(depth),
        labels,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub description: SceneDescription,
    pub frames: Vec<Frame>,
    pub depths: Vec<DepthMap>,
    pub trajectory: CameraTrajectory,
    pub dynamic_masks: Vec<DynamicMask>,
}

impl SyntheticScene {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.trajectory.intrinsics
    }
}

/// Builds and renders a scene along `camera` (one pose per frame, or a
/// single pose used for every frame).
pub fn make_scene(
    kind: SceneKind,
    params: &BTreeMap<String, f64>,
    frames: usize,
    camera: &CameraTrajectory,
) -> Result<SyntheticScene> {
    if frames == 0 {
        return Err(Error::invalid("frame count must be positive"));
    }
    if camera.len() != frames && camera.len() != 1 {
        return Err(Error::invalid(format!(
            "camera trajectory has {} poses, expected {frames} or 1",
            camera.len()
        )));
    }
    camera.intrinsics.validate()?;
    let description = SceneDescription::new(kind, params)?;
    let poses: Vec<PoseSE3> = (0..frames)
        .map(|t| if camera.len() == 1 { camera.poses[0] } else { camera.poses[t] })
        .collect();
    let k = camera.intrinsics;
    let mut out_frames = Vec::with_capacity(frames);
    let mut depths = Vec::with_capacity(frames);
    let mut masks = Vec::with_capacity(frames);
    for (t, pose) in poses.iter().enumerate() {
        let r = render_description(&description, pose, &k, t);
        masks.push(DynamicMask {
            mask: r.labels.map(|l| l.is_some_and(|i| description.primitives[i].dynamic)),
        });
        out_frames.push(r.frame);
        depths.push(r.depth);
    }
    Ok(SyntheticScene {
        description,
        frames: out_frames,
        depths,
        trajectory: CameraTrajectory::new(k, poses)?,
        dynamic_masks: masks,
    })
}

/// Ray-cast render of `scene` at frame `time` from an arbitrary pose.
pub fn render_scene(scene: &SyntheticScene, pose: &PoseSE3, k: &Intrinsics, time: usize) -> (Frame, DepthMap) {
    let r = render_description(&scene.description, pose, k, time);
    (r.frame, r.depth)
}

/// Camera trajectory translating the camera center by `step` (world units,
/// along world +x) per frame.
pub fn pan_trajectory(k: Intrinsics, frames: usize, step: f64) -> Result<CameraTrajectory> {
    let poses = (0..frames)
        .map(|t| PoseSE3::from_translation(Vector3::new(-step * t as f64, 0.0, 0.0)))
        .collect();
    CameraTrajectory::new(k, poses)
}

/// Exact flow of a fronto-parallel source plane at `plane_depth` through
/// the homography `H = K (R + t·nᵀ/d) K⁻¹`, `n = (0, 0, 1)`.
pub fn analytic_plane_flow(plane_depth: f64, e_src: &PoseSE3, e_tgt: &PoseSE3, k: &Intrinsics) -> Result<FlowField> {
    if !(plane_depth > 0.0) {
        return Err(Error::invalid(format!("plane depth must be positive, got {plane_depth}")));
    }
    let rel = relative_pose(e_src, e_tgt);
    let n = Vector3::new(0.0, 0.0, 1.0);
    let a = rel.pose.rotation() + rel.pose.translation() * n.transpose() / plane_depth;
    let hom = k.matrix() * a * k.inverse_matrix();
    let (w, h) = k.dims();
    let mut flow = FlowField {
        vectors: Grid::new(w, h, Vector2::zeros()),
        valid: Grid::new(w, h, false),
        target_depth: Grid::new(w, h, f64::NAN),
    };
    for y in 0..h {
        for x in 0..w {
            let p = hom * Vector3::new(x as f64, y as f64, 1.0);
            let z = plane_depth * p.z;
            if !(z > MIN_DEPTH) {
                continue;
            }
            flow.vectors.set(x, y, Vector2::new(p.x / p.z - x as f64, p.y / p.z - y as f64));
            flow.valid.set(x, y, true);
            flow.target_depth.set(x, y, z);
        }
    }
    Ok(flow)
}

/// Target pixels whose surface point is not observed by the source camera:
/// nothing hit, projecting outside the source image (nearest pixel), or
/// hidden behind a nearer surface in the source view.
pub fn disocclusion_mask(
    desc: &SceneDescription,
    source: &PoseSE3,
    target: &PoseSE3,
    k: &Intrinsics,
    time: usize,
) -> Mask {
    let (w, h) = k.dims();
    Grid::from_fn(w, h, |x, y| {
        let Some(hit) = desc.cast(target, k, &Vector2::new(x as f64, y as f64), time) else {
            return true;
        };
        let Some(proj) = project(&source.transform_point(&hit.point), k) else {
            return true;
        };
        let (px, py) = (proj.pixel.x.round(), proj.pixel.y.round());
        if !(px >= 0.0 && py >= 0.0 && px < w as f64 && py < h as f64) {
            return true;
        }
        match desc.cast(source, k, &proj.pixel, time) {
            Some(first) => (first.depth - proj.depth).abs() > 1e-6 * proj.depth.max(1.0),
            None => true,
        }
    })
}

/// Width (pixels) of the band revealed next to a vertical near-plane edge
/// when the camera center moves sideways by `offset`.
pub fn disocclusion_band_width(fx: f64, offset: f64, near_depth: f64, far_depth: f64) -> f64 {
    fx * offset.abs() * (1.0 / near_depth - 1.0 / far_depth)
}
