//! Pinhole intrinsics, rigid poses and trajectory construction.
//!
//! Conventions: poses map world to camera, `x_cam = R·x_world + t`, with a
//! right-handed camera frame (+z forward, +x right, +y down). A
//! [`RelativeTransform`] maps source-camera coordinates to target-camera
//! coordinates, so the target extrinsic is `M ∘ E_source`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::{Error, Result};

/// Points with camera depth at or below this are not projectable.
pub const MIN_DEPTH: f64 = 1e-6;

/// Tolerance for `RᵀR = I` and `det(R) = +1`.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, invariant: &'static str| {
            Err(Error::Invariant {
                field: format!("intrinsics.{field}"),
                invariant,
            })
        };
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return bad("fx", "fx > 0");
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return bad("fy", "fy > 0");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx", "0 <= cx < width");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy", "0 <= cy < height");
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Result of a successful perspective projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

/// Perspective projection; `None` is the invalid marker for `z <= MIN_DEPTH`.
#[inline]
pub fn project(point_cam: &Vector3<f64>, k: &Intrinsics) -> Option<Projection> {
    let z = point_cam.z;
    if !(z > MIN_DEPTH) || !point_cam.x.is_finite() || !point_cam.y.is_finite() {
        return None;
    }
    Some(Projection {
        pixel: Vector2::new(k.fx * point_cam.x / z + k.cx, k.fy * point_cam.y / z + k.cy),
        depth: z,
    })
}

/// Inverse pinhole lift of a pixel with z-depth `depth`.
#[inline]
pub fn unproject(pixel: &Vector2<f64>, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::invalid(format!("depth must be positive, got {depth}")));
    }
    Ok(Vector3::new(
        (pixel.x - k.cx) * depth / k.fx,
        (pixel.y - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Rigid world→camera transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    /// Validates orthonormality and `det(R) = +1`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, "R")?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant {
                field: "t".into(),
                invariant: "t finite",
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Skips validation; callers guarantee `rotation` is a proper rotation.
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), t)
    }

    pub fn from_rotation(r: &Rotation3<f64>) -> Self {
        Self::from_parts(*r.matrix(), Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &PoseSE3) -> Self {
        Self::from_parts(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Geodesic angle between the rotations of two poses, radians.
    pub fn rotation_angle_to(&self, other: &PoseSE3) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

fn check_rotation(r: &Matrix3<f64>, field: &str) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant {
            field: field.into(),
            invariant: "R finite",
        });
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > ROTATION_TOL {
        return Err(Error::Invariant {
            field: field.into(),
            invariant: "RᵀR = I",
        });
    }
    if (r.determinant() - 1.0).abs() > ROTATION_TOL {
        return Err(Error::Invariant {
            field: field.into(),
            invariant: "det(R) = +1",
        });
    }
    Ok(())
}

/// Rigid motion from the source camera frame to the target camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RelativeTransform {
    pub pose: PoseSE3,
}

impl RelativeTransform {
    pub fn identity() -> Self {
        Self {
            pose: PoseSE3::identity(),
        }
    }

    pub fn new(pose: PoseSE3) -> Self {
        Self { pose }
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.pose.inverse())
    }

    /// Displacement of the camera center, expressed in the source camera frame.
    pub fn camera_displacement(&self) -> Vector3<f64> {
        self.pose.center()
    }
}

/// `M = E_target ∘ E_source⁻¹`.
pub fn relative_pose(source: &PoseSE3, target: &PoseSE3) -> RelativeTransform {
    RelativeTransform::new(target.compose(&source.inverse()))
}

/// Target extrinsic obtained by moving `source` through `rel`.
pub fn apply_relative(source: &PoseSE3, rel: &RelativeTransform) -> PoseSE3 {
    rel.pose.compose(source)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraTrajectory {
    pub intrinsics: Intrinsics,
    pub poses: Vec<PoseSE3>,
}

impl CameraTrajectory {
    pub fn new(intrinsics: Intrinsics, poses: Vec<PoseSE3>) -> Result<Self> {
        intrinsics.validate()?;
        if poses.is_empty() {
            return Err(Error::invalid("trajectory needs at least one pose"));
        }
        Ok(Self { intrinsics, poses })
    }

    /// `frames` copies of the identity pose.
    pub fn stationary(intrinsics: Intrinsics, frames: usize) -> Result<Self> {
        Self::new(intrinsics, vec![PoseSE3::identity(); frames])
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let a = q0.quaternion();
    let mut b = *q1.quaternion();
    let mut dot = a.coords.dot(&b.coords);
    // shortest arc
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        let q = Quaternion::from(a.coords * (1.0 - s) + b.coords * s);
        return UnitQuaternion::from_quaternion(q);
    }
    let theta = dot.min(1.0).acos();
    let sin_theta = theta.sin();
    let w0 = ((1.0 - s) * theta).sin() / sin_theta;
    let w1 = (s * theta).sin() / sin_theta;
    UnitQuaternion::from_quaternion(Quaternion::from(a.coords * w0 + b.coords * w1))
}

fn pose_from_quaternion(q: &UnitQuaternion<f64>, t: Vector3<f64>) -> PoseSE3 {
    PoseSE3::from_parts(*q.to_rotation_matrix().matrix(), t)
}

/// Dense per-frame poses from sparse keyframes: slerp on rotations, linear
/// on translations, held constant before the first and after the last key.
pub fn interpolate_trajectory(keyframes: &[(usize, PoseSE3)], frames: usize) -> Result<Vec<PoseSE3>> {
    if keyframes.is_empty() {
        return Err(Error::invalid("at least one keyframe is required"));
    }
    if frames == 0 {
        return Err(Error::invalid("frame count must be positive"));
    }
    for (i, (idx, _)) in keyframes.iter().enumerate() {
        if *idx >= frames {
            return Err(Error::invalid(format!(
                "keyframe {i} index {idx} outside [0, {}]",
                frames - 1
            )));
        }
        if i > 0 && keyframes[i - 1].0 >= *idx {
            return Err(Error::invalid(format!(
                "keyframe indices must be strictly increasing (keyframe {i} has index {idx})"
            )));
        }
    }

    let quats: Vec<_> = keyframes.iter().map(|(_, p)| p.quaternion()).collect();
    let mut out = Vec::with_capacity(frames);
    let mut seg = 0;
    for f in 0..frames {
        while seg + 1 < keyframes.len() && keyframes[seg + 1].0 <= f {
            seg += 1;
        }
        let (i0, p0) = &keyframes[seg];
        if f <= *i0 || seg + 1 == keyframes.len() {
            // keyframe itself, or held before the first / after the last key
            let held = if f < keyframes[0].0 { &keyframes[0].1 } else { p0 };
            out.push(*held);
            continue;
        }
        let (i1, p1) = &keyframes[seg + 1];
        let s = (f - i0) as f64 / (i1 - i0) as f64;
        let q = slerp(&quats[seg], &quats[seg + 1], s);
        let t = p0.translation * (1.0 - s) + p1.translation * s;
        out.push(pose_from_quaternion(&q, t));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetKind {
    Orbit,
    Dolly,
    Truck,
    Arc,
    Static,
}

impl FromStr for PresetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit" => Ok(Self::Orbit),
            "dolly" => Ok(Self::Dolly),
            "truck" => Ok(Self::Truck),
            "arc" => Ok(Self::Arc),
            "static" => Ok(Self::Static),
            other => Err(Error::invalid(format!(
                "unknown preset `{other}` (expected orbit, dolly, truck, arc or static)"
            ))),
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Orbit => "orbit",
            Self::Dolly => "dolly",
            Self::Truck => "truck",
            Self::Arc => "arc",
            Self::Static => "static",
        })
    }
}

fn param(params: &BTreeMap<String, f64>, kind: PresetKind, key: &str) -> Result<f64> {
    match params.get(key) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(v) => Err(Error::invalid(format!("{kind} parameter `{key}` is not finite ({v})"))),
        None => Err(Error::invalid(format!("{kind} preset requires parameter `{key}`"))),
    }
}

/// Relative transform of a camera that orbits `look_at` (source-camera
/// coordinates) by `angle` radians about `axis`, keeping its gaze on it.
fn orbit_transform(look_at: Vector3<f64>, axis: Vector3<f64>, angle: f64) -> RelativeTransform {
    let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
    let r = *rot.matrix();
    let center = look_at + r * (-look_at);
    // camera-to-source rotation is `r`, so source-to-target is rᵀ
    let rt = r.transpose();
    RelativeTransform::new(PoseSE3::from_parts(rt, -(rt * center)))
}

/// Per-frame relative transforms of a preset camera move, `s = f/(T−1)`.
///
/// Offsets describe camera motion in the source camera frame: `truck`
/// moves the center along +x, `dolly` along +z. `orbit` circles a look-at
/// point `radius` ahead of the camera about the vertical (y) axis, `arc`
/// does the same about the horizontal (x) axis.
pub fn preset_relatives(
    kind: PresetKind,
    params: &BTreeMap<String, f64>,
    frames: usize,
) -> Result<Vec<RelativeTransform>> {
    if frames == 0 {
        return Err(Error::invalid("frame count must be positive"));
    }
    let ramp = |f: usize| {
        if frames == 1 {
            0.0
        } else {
            f as f64 / (frames - 1) as f64
        }
    };
    let moved = |c: Vector3<f64>| RelativeTransform::new(PoseSE3::from_translation(-c));
    let out = match kind {
        PresetKind::Static => vec![RelativeTransform::identity(); frames],
        PresetKind::Truck | PresetKind::Dolly => {
            let total = param(params, kind, "total_offset")?;
            let dir = if kind == PresetKind::Truck {
                Vector3::x()
            } else {
                Vector3::z()
            };
            (0..frames).map(|f| moved(dir * (total * ramp(f)))).collect()
        }
        PresetKind::Orbit | PresetKind::Arc => {
            let radius = param(params, kind, "radius")?;
            if radius <= 0.0 {
                return Err(Error::invalid(format!("{kind} radius must be positive")));
            }
            let total = param(params, kind, "total_degrees")?.to_radians();
            let axis = if kind == PresetKind::Orbit {
                Vector3::y()
            } else {
                Vector3::x()
            };
            let look_at = Vector3::new(0.0, 0.0, radius);
            (0..frames)
                .map(|f| orbit_transform(look_at, axis, total * ramp(f)))
                .collect()
        }
    };
    Ok(out)
}

/// Composes a preset move onto `base` (one pose per frame, or a single pose
/// broadcast to all frames).
pub fn preset_trajectory(
    kind: PresetKind,
    params: &BTreeMap<String, f64>,
    frames: usize,
    base: &CameraTrajectory,
) -> Result<CameraTrajectory> {
    if base.len() != frames && base.len() != 1 {
        return Err(Error::invalid(format!(
            "base trajectory has {} poses, expected {frames} or 1",
            base.len()
        )));
    }
    let rels = preset_relatives(kind, params, frames)?;
    let poses = rels
        .iter()
        .enumerate()
        .map(|(f, rel)| {
            let src = if base.len() == 1 { &base.poses[0] } else { &base.poses[f] };
            apply_relative(src, rel)
        })
        .collect();
    CameraTrajectory::new(base.intrinsics, poses)
}

/// Rotation about the camera y axis (yaw).
pub fn rotation_y(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::y_axis(), angle).matrix()
}

/// Rotation about the camera x axis (pitch).
pub fn rotation_x(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), angle).matrix()
}

/// Rotation about the optical axis (roll).
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix()
}

/// Exponential map of an axis-angle vector.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    *Rotation3::new(*omega).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k_unit() -> Intrinsics {
        Intrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap()
    }

    fn k_100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 64.0, 48.0, 128, 96).unwrap()
    }

    pub(crate) fn random_pose(rng: &mut impl Rng) -> PoseSE3 {
        let w = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        PoseSE3::new(so3_exp(&w), t).unwrap()
    }

    #[test]
    fn project_examples() {
        let p = project(&Vector3::new(0.0, 0.0, 1.0), &k_unit()).unwrap();
        assert_eq!(p.pixel, Vector2::new(0.0, 0.0));
        assert_eq!(p.depth, 1.0);

        let p = project(&Vector3::new(0.1, -0.2, 2.0), &k_100()).unwrap();
        assert!((p.pixel - Vector2::new(69.0, 38.0)).norm() < 1e-12);
        assert_eq!(p.depth, 2.0);

        assert!(project(&Vector3::new(0.0, 0.0, -1.0), &k_100()).is_none());
        assert!(project(&Vector3::new(0.0, 0.0, 1e-7), &k_100()).is_none());
    }

    #[test]
    fn unproject_examples() {
        let k = k_100();
        let p = unproject(&Vector2::new(k.cx, k.cy), 3.5, &k).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 3.5));
        let p = unproject(&Vector2::new(164.0, 48.0), 2.0, &k).unwrap();
        assert_eq!(p, Vector3::new(2.0, 0.0, 2.0));
        assert!(unproject(&Vector2::new(1.0, 1.0), 0.0, &k).is_err());
        assert!(unproject(&Vector2::new(1.0, 1.0), -2.0, &k).is_err());
    }

    #[test]
    fn project_unproject_roundtrip_random() {
        let k = k_100();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let px = Vector2::new(rng.random_range(0.0..128.0), rng.random_range(0.0..96.0));
            let d = rng.random_range(0.1..50.0);
            let p = project(&unproject(&px, d, &k).unwrap(), &k).unwrap();
            assert!((p.pixel - px).abs().max() < 1e-9);
            assert!((p.depth - d).abs() < 1e-9);
        }
    }

    #[test]
    fn pose_validation_names_invariant() {
        let mut r = Matrix3::identity();
        r[(2, 2)] = -1.0;
        match PoseSE3::new(r, Vector3::zeros()) {
            Err(Error::Invariant { invariant, .. }) => assert_eq!(invariant, "det(R) = +1"),
            other => panic!("unexpected {other:?}"),
        }
        let mut r = Matrix3::identity();
        r[(0, 1)] = 0.1;
        match PoseSE3::new(r, Vector3::zeros()) {
            Err(Error::Invariant { invariant, .. }) => assert_eq!(invariant, "RᵀR = I"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relative_pose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_pose(&mut rng);
        let rel = relative_pose(&a, &a);
        assert!((rel.pose.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(rel.pose.translation().norm() < 1e-12);

        let b = random_pose(&mut rng);
        let rel = relative_pose(&PoseSE3::identity(), &b);
        assert_eq!(rel.pose, b);
    }

    #[test]
    fn relative_pose_point_mapping_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let src = random_pose(&mut rng);
            let tgt = random_pose(&mut rng);
            let rel = relative_pose(&src, &tgt);
            let back = apply_relative(&src, &rel);
            assert!((back.rotation() - tgt.rotation()).abs().max() < 1e-9);
            assert!((back.translation() - tgt.translation()).abs().max() < 1e-9);
            let mut max_err: f64 = 0.0;
            for _ in 0..50 {
                let xw = Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                );
                let via_source = rel.pose.transform_point(&src.transform_point(&xw));
                let direct = tgt.transform_point(&xw);
                max_err = max_err.max((via_source - direct).abs().max());
                let back = rel.inverse().pose.transform_point(&direct);
                max_err = max_err.max((back - src.transform_point(&xw)).abs().max());
            }
            assert!(max_err < 1e-9, "max_err {max_err}");
        }
    }

    #[test]
    fn interpolate_identical_keyframes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng);
        let poses = interpolate_trajectory(&[(0, p), (11, p)], 12).unwrap();
        assert_eq!(poses.len(), 12);
        for q in &poses {
            assert!((q.rotation() - p.rotation()).abs().max() < 1e-12);
            assert!((q.translation() - p.translation()).abs().max() < 1e-12);
        }
        assert_eq!(poses[0], p);
        assert_eq!(poses[11], p);
    }

    #[test]
    fn interpolate_linear_translation_midpoint() {
        let a = PoseSE3::identity();
        let b = PoseSE3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let poses = interpolate_trajectory(&[(0, a), (10, b)], 11).unwrap();
        assert!((poses[5].translation() - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn interpolate_yaw_half_angle() {
        let a = PoseSE3::identity();
        let b = PoseSE3::new(rotation_y(std::f64::consts::FRAC_PI_2), Vector3::zeros()).unwrap();
        let poses = interpolate_trajectory(&[(0, a), (10, b)], 11).unwrap();
        let expected = rotation_y(std::f64::consts::FRAC_PI_4);
        assert!((poses[5].rotation() - expected).abs().max() < 1e-9);
    }

    #[test]
    fn interpolate_shortest_arc() {
        // same rotation, quaternion sign flipped: no motion in between
        let b = PoseSE3::new(rotation_y(0.3), Vector3::zeros()).unwrap();
        let q = b.quaternion();
        let flipped = UnitQuaternion::new_unchecked(-*q.quaternion());
        let s = slerp(&q, &flipped, 0.5);
        assert!((s.to_rotation_matrix().matrix() - b.rotation()).abs().max() < 1e-12);
    }

    #[test]
    fn interpolate_single_and_errors() {
        let p = PoseSE3::from_translation(Vector3::new(0.0, 1.0, 0.0));
        let poses = interpolate_trajectory(&[(4, p)], 8).unwrap();
        assert!(poses.iter().all(|q| *q == p));
        assert!(interpolate_trajectory(&[], 4).is_err());
        assert!(interpolate_trajectory(&[(0, p), (0, p)], 4).is_err());
        assert!(interpolate_trajectory(&[(2, p), (1, p)], 4).is_err());
        assert!(interpolate_trajectory(&[(0, p), (4, p)], 4).is_err());
    }

    #[test]
    fn interpolate_reversal_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let keys: Vec<_> = [0usize, 3, 9].iter().map(|&i| (i, random_pose(&mut rng))).collect();
        let n = 10;
        let fwd = interpolate_trajectory(&keys, n).unwrap();
        let rev_keys: Vec<_> = keys.iter().rev().map(|(i, p)| (n - 1 - i, *p)).collect();
        let rev = interpolate_trajectory(&rev_keys, n).unwrap();
        for f in 0..n {
            let a = &fwd[f];
            let b = &rev[n - 1 - f];
            assert!((a.rotation() - b.rotation()).abs().max() < 1e-12);
            assert!((a.translation() - b.translation()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn preset_static_and_truck() {
        let params = BTreeMap::new();
        let rels = preset_relatives(PresetKind::Static, &params, 5).unwrap();
        assert!(rels.iter().all(|r| r.pose == PoseSE3::identity()));

        let params = BTreeMap::from([("total_offset".to_string(), 1.0)]);
        let rels = preset_relatives(PresetKind::Truck, &params, 11).unwrap();
        assert!((rels[10].camera_displacement() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((rels[10].pose.translation() - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(rels[0].pose, PoseSE3::identity());
    }

    #[test]
    fn preset_orbit_keeps_look_at() {
        let params = BTreeMap::from([("radius".to_string(), 2.0), ("total_degrees".to_string(), 90.0)]);
        let rels = preset_relatives(PresetKind::Orbit, &params, 12).unwrap();
        let look_at = Vector3::new(0.0, 0.0, 2.0);
        for rel in &rels {
            let c = rel.camera_displacement();
            assert!(((c - look_at).norm() - 2.0).abs() < 1e-9);
            // look-at point sits on the target optical axis
            let in_target = rel.pose.transform_point(&look_at);
            assert!(in_target.x.abs() < 1e-9 && in_target.y.abs() < 1e-9);
            assert!((in_target.z - 2.0).abs() < 1e-9);
        }
        let last = rels.last().unwrap().camera_displacement();
        assert!((last - Vector3::new(-2.0, 0.0, 2.0)).norm() < 1e-9, "{last}");
    }

    #[test]
    fn preset_errors() {
        let empty = BTreeMap::new();
        assert!(preset_relatives(PresetKind::Orbit, &empty, 4).is_err());
        assert!(preset_relatives(PresetKind::Dolly, &empty, 4).is_err());
        assert!("spiral".parse::<PresetKind>().is_err());
    }

    #[test]
    fn preset_trajectory_composes_onto_base() {
        let k = k_100();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = CameraTrajectory::new(k, (0..6).map(|_| random_pose(&mut rng)).collect()).unwrap();
        let params = BTreeMap::from([("radius".to_string(), 3.0), ("total_degrees".to_string(), 30.0)]);
        let out = preset_trajectory(PresetKind::Arc, &params, 6, &base).unwrap();
        let rels = preset_relatives(PresetKind::Arc, &params, 6).unwrap();
        for f in 0..6 {
            let rel = relative_pose(&base.poses[f], &out.poses[f]);
            assert!((rel.pose.rotation() - rels[f].pose.rotation()).abs().max() < 1e-9);
            assert!((rel.pose.translation() - rels[f].pose.translation()).abs().max() < 1e-9);
            PoseSE3::new(*out.poses[f].rotation(), *out.poses[f].translation()).unwrap();
        }
        let st = preset_trajectory(PresetKind::Static, &BTreeMap::new(), 6, &base).unwrap();
        assert_eq!(st, base);
    }
}
