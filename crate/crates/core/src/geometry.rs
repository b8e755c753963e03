//! Depth lifting, camera-induced flow and dynamic-region estimation.

use nalgebra::{Vector2, Vector3};

use crate::camera::{project, unproject, Intrinsics, PoseSE3, RelativeTransform};
use crate::grid::{Grid, Mask};
use crate::{Error, Result};

/// Default threshold (pixels) separating dynamic from static pixels.
pub const DEFAULT_DYNAMIC_THRESHOLD: f64 = 1.5;

/// Per-pixel z-depth. `values` keeps the raw samples (so files round-trip
/// exactly); `valid` marks the strictly positive, finite ones.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub values: Grid<f64>,
    pub valid: Mask,
}

impl DepthMap {
    /// Validity derived from the values: finite and `> 0`.
    pub fn from_values(values: Grid<f64>) -> Self {
        let valid = values.map(|&d| d.is_finite() && d > 0.0);
        Self { values, valid }
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self::from_values(Grid::new(width, height, depth))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.values.index(x, y);
        self.valid.as_slice()[i].then(|| self.values.as_slice()[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointFrame {
    SourceCamera,
    World,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pointmap {
    pub points: Grid<Vector3<f64>>,
    pub valid: Mask,
    pub frame: PointFrame,
}

impl Pointmap {
    pub fn dims(&self) -> (usize, usize) {
        self.points.dims()
    }

    /// Re-expresses the points in another frame given the source extrinsic.
    pub fn to_frame(&self, frame: PointFrame, extrinsic: &PoseSE3) -> Pointmap {
        if frame == self.frame {
            return self.clone();
        }
        let xf = match frame {
            PointFrame::World => extrinsic.inverse(),
            PointFrame::SourceCamera => *extrinsic,
        };
        Pointmap {
            points: self.points.map(|p| xf.transform_point(p)),
            valid: self.valid.clone(),
            frame,
        }
    }
}

/// Per-pixel displacement into the target view.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub vectors: Grid<Vector2<f64>>,
    pub valid: Mask,
    /// Depth of each source point in the target camera (NaN when unknown).
    pub target_depth: Grid<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            vectors: Grid::new(width, height, Vector2::zeros()),
            valid: Grid::new(width, height, true),
            target_depth: Grid::new(width, height, 1.0),
        }
    }

    /// Every pixel displaced by the same vector, unit target depth.
    pub fn uniform(width: usize, height: usize, v: Vector2<f64>) -> Self {
        Self {
            vectors: Grid::new(width, height, v),
            valid: Grid::new(width, height, true),
            target_depth: Grid::new(width, height, 1.0),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.vectors.dims()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicMask {
    pub mask: Mask,
}

impl DynamicMask {
    pub fn all_static(width: usize, height: usize) -> Self {
        Self {
            mask: Grid::new(width, height, false),
        }
    }
}

/// Lifts every valid depth pixel through the inverse pinhole model. With a
/// pose the points are taken to world coordinates by `E⁻¹`; otherwise they
/// stay in the source camera frame (stationary camera, identity pose).
pub fn lift_depth(depth: &DepthMap, k: &Intrinsics, pose: Option<&PoseSE3>) -> Result<Pointmap> {
    if depth.dims() != k.dims() {
        return Err(Error::dims(k.dims(), depth.dims()));
    }
    let (w, h) = depth.dims();
    let cam_to_world = pose.map(PoseSE3::inverse);
    let mut points = Grid::new(w, h, Vector3::zeros());
    let mut valid = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let Some(d) = depth.at(x, y) else { continue };
            let p = unproject(&Vector2::new(x as f64, y as f64), d, k)?;
            let p = match &cam_to_world {
                Some(xf) => xf.transform_point(&p),
                None => p,
            };
            points.set(x, y, p);
            valid.set(x, y, true);
        }
    }
    Ok(Pointmap {
        points,
        valid,
        frame: if pose.is_some() {
            PointFrame::World
        } else {
            PointFrame::SourceCamera
        },
    })
}

/// Flow induced by moving the camera through `rel`:
/// `f(u,v) = Π(C_rel · G(u,v), K) − (u,v)`.
///
/// World-frame pointmaps need `source_extrinsic` to be brought into the
/// source camera frame first.
pub fn compute_flow(
    pointmap: &Pointmap,
    rel: &RelativeTransform,
    k: &Intrinsics,
    source_extrinsic: Option<&PoseSE3>,
) -> Result<FlowField> {
    let to_source = match (pointmap.frame, source_extrinsic) {
        (PointFrame::SourceCamera, _) => None,
        (PointFrame::World, Some(e)) => Some(e),
        (PointFrame::World, None) => {
            return Err(Error::invalid(
                "world-frame pointmap needs the source extrinsic to compute flow",
            ))
        }
    };
    // Reprojecting a lifted point is only exact up to round-off; a camera
    // that does not move must give exactly zero flow.
    let stationary = *rel == RelativeTransform::identity();
    let (w, h) = pointmap.dims();
    let mut vectors = Grid::new(w, h, Vector2::zeros());
    let mut valid = Grid::new(w, h, false);
    let mut target_depth = Grid::new(w, h, f64::NAN);
    for y in 0..h {
        for x in 0..w {
            let i = pointmap.points.index(x, y);
            if !pointmap.valid.as_slice()[i] {
                continue;
            }
            let mut p = pointmap.points.as_slice()[i];
            if let Some(e) = to_source {
                p = e.transform_point(&p);
            }
            let q = rel.pose.transform_point(&p);
            let Some(proj) = project(&q, k) else { continue };
            if !stationary {
                vectors.set(x, y, proj.pixel - Vector2::new(x as f64, y as f64));
            }
            valid.set(x, y, true);
            target_depth.set(x, y, proj.depth);
        }
    }
    Ok(FlowField {
        vectors,
        valid,
        target_depth,
    })
}

/// Marks a pixel dynamic when both flows are valid and their difference
/// exceeds `threshold` pixels (strictly).
pub fn estimate_dynamic_mask(
    optical: &FlowField,
    induced: &FlowField,
    threshold: f64,
) -> Result<DynamicMask> {
    if optical.dims() != induced.dims() {
        return Err(Error::dims(induced.dims(), optical.dims()));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {threshold}")));
    }
    let (w, h) = optical.dims();
    let mask = Grid::from_fn(w, h, |x, y| {
        *optical.valid.get(x, y)
            && *induced.valid.get(x, y)
            && (optical.vectors.get(x, y) - induced.vectors.get(x, y)).norm() > threshold
    });
    Ok(DynamicMask { mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{rotation_z, relative_pose, so3_exp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k_centered(w: usize, h: usize, f: f64) -> Intrinsics {
        Intrinsics::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h).unwrap()
    }

    #[test]
    fn lift_trivial_cases() {
        let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 3).unwrap();
        let pm = lift_depth(&DepthMap::constant(4, 3, 1.0), &k, None).unwrap();
        assert_eq!(pm.frame, PointFrame::SourceCamera);
        assert_eq!(*pm.points.get(0, 0), Vector3::new(0.0, 0.0, 1.0));

        let k = Intrinsics::new(2.0, 2.0, 1.0, 1.0, 4, 3).unwrap();
        let mut d = DepthMap::constant(4, 3, 3.0);
        d.values.set(0, 2, -1.0);
        d.valid.set(0, 2, false);
        let pm = lift_depth(&d, &k, None).unwrap();
        // pixel (cx + fx, cy)
        assert_eq!(*pm.points.get(3, 1), Vector3::new(3.0, 0.0, 3.0));
        assert!(!*pm.valid.get(0, 2));
    }

    #[test]
    fn lift_dimension_mismatch() {
        let k = k_centered(8, 6, 10.0);
        assert!(lift_depth(&DepthMap::constant(6, 8, 1.0), &k, None).is_err());
    }

    #[test]
    fn lift_matches_brute_force_bitwise() {
        let k = Intrinsics::new(37.5, 41.25, 9.3, 6.1, 20, 14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let depth = DepthMap::from_values(Grid::from_fn(20, 14, |_, _| {
            if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.2..20.0)
            }
        }));
        let pose = PoseSE3::new(so3_exp(&Vector3::new(0.1, -0.3, 0.2)), Vector3::new(0.5, 1.0, -2.0)).unwrap();
        let pm = lift_depth(&depth, &k, Some(&pose)).unwrap();
        assert_eq!(pm.frame, PointFrame::World);
        let kinv = k.inverse_matrix();
        let inv = pose.inverse();
        for y in 0..14 {
            for x in 0..20 {
                let d = *depth.values.get(x, y);
                if !(d > 0.0) {
                    assert!(!*pm.valid.get(x, y));
                    continue;
                }
                // G = h(K⁻¹ D), then to world
                let ray = kinv * Vector3::new(x as f64, y as f64, 1.0);
                let cam = Vector3::new((x as f64 - k.cx) * d / k.fx, (y as f64 - k.cy) * d / k.fy, d);
                assert!((ray * d - cam).norm() < 1e-12);
                let world = inv.rotation() * cam + inv.translation();
                assert_eq!(*pm.points.get(x, y), world);
            }
        }
    }

    #[test]
    fn identity_flow_is_zero() {
        let k = k_centered(16, 12, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let depth = DepthMap::from_values(Grid::from_fn(16, 12, |_, _| rng.random_range(1.0..5.0)));
        let pm = lift_depth(&depth, &k, None).unwrap();
        let flow = compute_flow(&pm, &RelativeTransform::identity(), &k, None).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                assert!(*flow.valid.get(x, y));
                assert_eq!(*flow.vectors.get(x, y), Vector2::zeros());
                assert_eq!(*flow.target_depth.get(x, y), *depth.values.get(x, y));
            }
        }
    }

    #[test]
    fn lateral_translation_uniform_flow() {
        let k = k_centered(32, 24, 50.0);
        let d = 4.0;
        let delta = 0.3;
        let pm = lift_depth(&DepthMap::constant(32, 24, d), &k, None).unwrap();
        // camera center moves +x by delta
        let rel = RelativeTransform::new(PoseSE3::from_translation(Vector3::new(-delta, 0.0, 0.0)));
        let flow = compute_flow(&pm, &rel, &k, None).unwrap();
        for v in flow.vectors.as_slice() {
            assert!((v - Vector2::new(-k.fx * delta / d, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn optical_axis_half_turn() {
        let k = k_centered(9, 7, 30.0);
        let pm = lift_depth(&DepthMap::constant(9, 7, 2.0), &k, None).unwrap();
        let rel = RelativeTransform::new(PoseSE3::new(rotation_z(std::f64::consts::PI), Vector3::zeros()).unwrap());
        let flow = compute_flow(&pm, &rel, &k, None).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                let a = x as f64 - k.cx;
                let b = y as f64 - k.cy;
                assert!((flow.vectors.get(x, y) - Vector2::new(-2.0 * a, -2.0 * b)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn world_pointmap_needs_extrinsic() {
        let k = k_centered(8, 6, 10.0);
        let pose = PoseSE3::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let pm = lift_depth(&DepthMap::constant(8, 6, 2.0), &k, Some(&pose)).unwrap();
        assert!(compute_flow(&pm, &RelativeTransform::identity(), &k, None).is_err());
        let flow = compute_flow(&pm, &RelativeTransform::identity(), &k, Some(&pose)).unwrap();
        assert!(flow.vectors.as_slice().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn points_behind_target_are_invalid() {
        let k = k_centered(8, 6, 10.0);
        let pm = lift_depth(&DepthMap::constant(8, 6, 1.0), &k, None).unwrap();
        // move the camera 2 units forward: the plane ends up behind it
        let rel = RelativeTransform::new(PoseSE3::from_translation(Vector3::new(0.0, 0.0, -2.0)));
        let flow = compute_flow(&pm, &rel, &k, None).unwrap();
        assert_eq!(flow.valid.count(), 0);
    }

    #[test]
    fn flow_validity_subset_of_pointmap() {
        let k = k_centered(12, 10, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let depth = DepthMap::from_values(Grid::from_fn(12, 10, |_, _| {
            if rng.random_bool(0.2) {
                f64::NAN
            } else {
                rng.random_range(0.5..3.0)
            }
        }));
        let pm = lift_depth(&depth, &k, None).unwrap();
        let rel = RelativeTransform::new(PoseSE3::new(so3_exp(&Vector3::new(0.0, 0.9, 0.0)), Vector3::new(0.5, 0.0, -1.0)).unwrap());
        let flow = compute_flow(&pm, &rel, &k, None).unwrap();
        for (f, p) in flow.valid.as_slice().iter().zip(pm.valid.as_slice()) {
            assert!(!f || *p);
        }
        assert!(flow.valid.count() < pm.valid.count());
    }

    #[test]
    fn flow_composition_returns_to_start() {
        let k = k_centered(24, 18, 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let depth = DepthMap::from_values(Grid::from_fn(24, 18, |_, _| rng.random_range(2.0..6.0)));
        let src = PoseSE3::identity();
        let tgt = PoseSE3::new(so3_exp(&Vector3::new(0.02, -0.05, 0.01)), Vector3::new(0.1, 0.05, 0.2)).unwrap();
        let rel = relative_pose(&src, &tgt);
        let pm = lift_depth(&depth, &k, None).unwrap();
        let fwd = compute_flow(&pm, &rel, &k, None).unwrap();
        for y in 0..18 {
            for x in 0..24 {
                if !*fwd.valid.get(x, y) {
                    continue;
                }
                let start = Vector2::new(x as f64, y as f64);
                let landed = start + fwd.vectors.get(x, y);
                let z = *fwd.target_depth.get(x, y);
                let back = rel.inverse().pose.transform_point(&unproject(&landed, z, &k).unwrap());
                let home = project(&back, &k).unwrap().pixel;
                assert!((home - start).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn dynamic_mask_examples() {
        let a = FlowField::uniform(4, 3, Vector2::new(1.0, -1.0));
        let m = estimate_dynamic_mask(&a, &a, 1.5).unwrap();
        assert_eq!(m.mask.count(), 0);

        let tau = 1.5;
        let mut b = a.clone();
        b.vectors.set(2, 1, Vector2::new(1.0 + 2.0 * tau, -1.0));
        let m = estimate_dynamic_mask(&b, &a, tau).unwrap();
        assert_eq!(m.mask.count(), 1);
        assert!(*m.mask.get(2, 1));

        let mut c = a.clone();
        c.vectors.set(0, 0, Vector2::new(1.0, -1.0 + tau));
        assert_eq!(estimate_dynamic_mask(&c, &a, tau).unwrap().mask.count(), 0);

        // invalid pixels are static regardless of difference
        b.valid.set(2, 1, false);
        assert_eq!(estimate_dynamic_mask(&b, &a, tau).unwrap().mask.count(), 0);

        assert!(estimate_dynamic_mask(&FlowField::zeros(3, 3), &a, tau).is_err());
        assert!(estimate_dynamic_mask(&a, &a, -1.0).is_err());
    }
}
