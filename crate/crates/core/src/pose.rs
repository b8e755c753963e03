//! Relative pose recovery from 3D–2D correspondences: a 6-point DLT inside a
//! seeded RANSAC loop, followed by Gauss–Newton refinement of the
//! reprojection error.

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Matrix3x4, Matrix6, SymmetricEigen, Vector2, Vector3, Vector4, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{project, so3_exp, unproject, Intrinsics, PoseSE3, RelativeTransform};
use crate::geometry::DepthMap;
use crate::{Error, Result};

/// Samples whose 3D scatter is worse conditioned than this are resampled.
pub const DEGENERACY_CONDITION: f64 = 1e8;

const REFINE_MAX_ITERATIONS: usize = 50;
const REFINE_STEP_TOL: f64 = 1e-10;
const MAX_STEP_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    /// Point in the source camera frame.
    pub point3d: Vector3<f64>,
    /// Observation in the target image, pixels.
    pub pixel: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub min_sample: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 2.0,
            confidence: 0.999,
            max_iterations: 10_000,
            min_sample: 6,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid(format!("confidence must be in (0, 1), got {}", self.confidence)));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::invalid(format!(
                "inlier_threshold must be positive, got {}",
                self.inlier_threshold
            )));
        }
        if self.min_sample < 6 {
            return Err(Error::invalid(format!("min_sample must be >= 6, got {}", self.min_sample)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PnpResult {
    pub pose: PoseSE3,
    /// Sorted indices of the correspondences that reproject within the
    /// threshold under `pose`.
    pub inliers: Vec<usize>,
    /// Hypotheses drawn, including resampled degenerate ones.
    pub iterations: usize,
}

/// Pixel reprojection error, `None` when the point lands behind the camera.
#[inline]
pub fn reprojection_error(pose: &PoseSE3, c: &Correspondence, k: &Intrinsics) -> Option<f64> {
    project(&pose.transform_point(&c.point3d), k).map(|p| (p.pixel - c.pixel).norm())
}

fn inliers_of(pose: &PoseSE3, corrs: &[Correspondence], k: &Intrinsics, threshold: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut err_sum = 0.0;
    for (i, c) in corrs.iter().enumerate() {
        if let Some(e) = reprojection_error(pose, c, k) {
            if e < threshold {
                idx.push(i);
                err_sum += e;
            }
        }
    }
    (idx, err_sum)
}

/// Similarity that centers points and scales their mean distance to √3.
fn normalizing_transform(points: &[Vector3<f64>]) -> (f64, Vector3<f64>) {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let scale = if mean_dist > 0.0 { 3f64.sqrt() / mean_dist } else { 1.0 };
    (scale, centroid)
}

fn is_degenerate(normalized: &[Vector3<f64>]) -> bool {
    let scatter = normalized.iter().fold(Matrix3::zeros(), |a, p| a + p * p.transpose());
    let eig = SymmetricEigen::new(scatter).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    !(min > 0.0) || max / min > DEGENERACY_CONDITION
}

/// Direct linear transform on normalized coordinates, then the nearest
/// rotation (polar factor) of the left 3×3 block. `None` for degenerate
/// configurations.
pub fn dlt_pose(corrs: &[Correspondence], k: &Intrinsics) -> Option<PoseSE3> {
    if corrs.len() < 6 {
        return None;
    }
    let points: Vec<_> = corrs.iter().map(|c| c.point3d).collect();
    let (s, centroid) = normalizing_transform(&points);
    let normalized: Vec<_> = points.iter().map(|p| (p - centroid) * s).collect();
    if is_degenerate(&normalized) {
        return None;
    }

    let mut a = DMatrix::<f64>::zeros(2 * corrs.len(), 12);
    for (i, (c, p)) in corrs.iter().zip(&normalized).enumerate() {
        let x = (c.pixel.x - k.cx) / k.fx;
        let y = (c.pixel.y - k.cy) / k.fy;
        let ph = Vector4::new(p.x, p.y, p.z, 1.0);
        for j in 0..4 {
            a[(2 * i, j)] = ph[j];
            a[(2 * i, 8 + j)] = -x * ph[j];
            a[(2 * i + 1, 4 + j)] = ph[j];
            a[(2 * i + 1, 8 + j)] = -y * ph[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = v_t.row(min_idx);
    let p_norm = Matrix3x4::from_fn(|r, c| h[4 * r + c]);

    // undo the point normalization: P = P̃ · [sI, −s·c; 0, 1]
    let mut m: Matrix3<f64> = p_norm.fixed_view::<3, 3>(0, 0) * s;
    let mut col: Vector3<f64> = p_norm.column(3) - m * centroid;
    let det = m.determinant();
    if !det.is_finite() || det.abs() < f64::EPSILON {
        return None;
    }
    if det < 0.0 {
        m = -m;
        col = -col;
    }
    let msvd = m.svd(true, true);
    let (u, v_t) = (msvd.u?, msvd.v_t?);
    let scale = msvd.singular_values.sum() / 3.0;
    if !(scale > 0.0) {
        return None;
    }
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        return None;
    }
    // re-orthonormalize against accumulated rounding
    let rsvd = r.svd(true, true);
    r = rsvd.u? * rsvd.v_t?;
    Some(PoseSE3::from_parts(r, col / scale))
}

fn iteration_bound(inlier_ratio: f64, sample: usize, confidence: f64) -> f64 {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1.0;
    }
    if good <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil()
}

/// Hypothesize-and-verify PnP. Deterministic for a fixed `config.seed`.
pub fn pnp_ransac(corrs: &[Correspondence], k: &Intrinsics, config: &RansacConfig) -> Result<PnpResult> {
    config.validate()?;
    let n = corrs.len();
    if n < config.min_sample {
        return Err(Error::invalid(format!(
            "need at least {} correspondences, got {n}",
            config.min_sample
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(PoseSE3, Vec<usize>, f64)> = None;
    let mut bound = config.max_iterations as f64;
    let mut iterations = 0;
    let mut sample = Vec::with_capacity(config.min_sample);

    while iterations < config.max_iterations && (iterations as f64) < bound {
        iterations += 1;
        sample.clear();
        sample.extend(rand::seq::index::sample(&mut rng, n, config.min_sample).iter().map(|i| corrs[i]));
        let Some(pose) = dlt_pose(&sample, k) else { continue };
        let (inl, err) = inliers_of(&pose, corrs, k, config.inlier_threshold);
        let better = match &best {
            None => true,
            Some((_, b, e)) => inl.len() > b.len() || (inl.len() == b.len() && err < *e),
        };
        if better {
            let ratio = inl.len() as f64 / n as f64;
            bound = bound.min(iteration_bound(ratio, config.min_sample, config.confidence));
            best = Some((pose, inl, err));
        }
    }

    let Some((mut pose, mut inliers, _)) = best else {
        return Err(Error::EstimationFailed(format!(
            "no non-degenerate sample in {iterations} iterations"
        )));
    };
    if inliers.len() < config.min_sample {
        return Err(Error::EstimationFailed(format!(
            "best model has {} inliers, need {}",
            inliers.len(),
            config.min_sample
        )));
    }

    // refit on the consensus set until it stops changing
    for _ in 0..3 {
        let subset: Vec<_> = inliers.iter().map(|&i| corrs[i]).collect();
        let Ok(refined) = refine_pose(&pose, &subset, k) else { break };
        let (inl, _) = inliers_of(&refined, corrs, k, config.inlier_threshold);
        if inl.len() < config.min_sample {
            break;
        }
        let stable = inl == inliers;
        pose = refined;
        inliers = inl;
        if stable {
            break;
        }
    }
    Ok(PnpResult {
        pose,
        inliers,
        iterations,
    })
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Summed squared reprojection error; `+∞` if any point is not in front.
pub fn reprojection_cost(pose: &PoseSE3, corrs: &[Correspondence], k: &Intrinsics) -> f64 {
    let mut cost = 0.0;
    for c in corrs {
        match project(&pose.transform_point(&c.point3d), k) {
            Some(p) => cost += (p.pixel - c.pixel).norm_squared(),
            None => return f64::INFINITY,
        }
    }
    cost
}

/// Left-multiplied increment `x' = exp(ω)·x + v` applied to a pose.
fn apply_increment(pose: &PoseSE3, delta: &Vector6<f64>) -> PoseSE3 {
    let r = so3_exp(&Vector3::new(delta[0], delta[1], delta[2]));
    let v = Vector3::new(delta[3], delta[4], delta[5]);
    PoseSE3::from_parts(r * pose.rotation(), r * pose.translation() + v)
}

/// Gauss–Newton refinement of the reprojection error.
pub fn refine_pose(initial: &PoseSE3, corrs: &[Correspondence], k: &Intrinsics) -> Result<PoseSE3> {
    refine_pose_traced(initial, corrs, k).map(|(p, _)| p)
}

/// Like [`refine_pose`], also returning the cost after every iteration
/// (the first entry is the initial cost). The sequence is non-increasing.
pub fn refine_pose_traced(
    initial: &PoseSE3,
    corrs: &[Correspondence],
    k: &Intrinsics,
) -> Result<(PoseSE3, Vec<f64>)> {
    if corrs.len() < 3 {
        return Err(Error::invalid(format!(
            "refinement needs at least 3 correspondences, got {}",
            corrs.len()
        )));
    }
    let mut pose = *initial;
    let mut cost = reprojection_cost(&pose, corrs, k);
    if !cost.is_finite() {
        return Err(Error::invalid("initial pose places points behind the camera"));
    }
    let mut trace = vec![cost];

    for _ in 0..REFINE_MAX_ITERATIONS {
        let mut hess = Matrix6::<f64>::zeros();
        let mut grad = Vector6::<f64>::zeros();
        for c in corrs {
            let xc = pose.transform_point(&c.point3d);
            let z = xc.z;
            let Some(p) = project(&xc, k) else {
                return Err(Error::invalid("point behind the camera during refinement"));
            };
            let r = p.pixel - c.pixel;
            let jp = Matrix2x3::new(
                k.fx / z,
                0.0,
                -k.fx * xc.x / (z * z),
                0.0,
                k.fy / z,
                -k.fy * xc.y / (z * z),
            );
            let jw = jp * (-skew(&xc));
            let mut j = nalgebra::Matrix2x6::<f64>::zeros();
            j.fixed_view_mut::<2, 3>(0, 0).copy_from(&jw);
            j.fixed_view_mut::<2, 3>(0, 3).copy_from(&jp);
            hess += j.transpose() * j;
            grad += j.transpose() * r;
        }

        let eig = SymmetricEigen::new(hess).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if !(hi > 0.0) || lo <= hi * 1e-14 {
            return Err(Error::Degenerate);
        }
        let Some(chol) = hess.cholesky() else {
            return Err(Error::Degenerate);
        };
        let step = -chol.solve(&grad);
        if step.norm() < REFINE_STEP_TOL {
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_STEP_HALVINGS {
            let trial = apply_increment(&pose, &(step * alpha));
            let trial_cost = reprojection_cost(&trial, corrs, k);
            if trial_cost <= cost {
                pose = trial;
                cost = trial_cost;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(cost);
        if (step * alpha).norm() < REFINE_STEP_TOL {
            break;
        }
    }
    Ok((pose, trace))
}

/// Lifts `pixel_src` with the source depth (nearest sample), pairs it with
/// `pixel_tgt` and runs PnP-RANSAC. The pose maps source-camera to
/// target-camera coordinates. Inlier indices refer to `matches`.
pub fn pose_from_depth_matches(
    depth_src: &DepthMap,
    matches: &[(Vector2<f64>, Vector2<f64>)],
    k: &Intrinsics,
    config: &RansacConfig,
) -> Result<(RelativeTransform, PnpResult)> {
    let (w, h) = depth_src.dims();
    let mut corrs = Vec::with_capacity(matches.len());
    let mut origin = Vec::with_capacity(matches.len());
    for (i, (src, tgt)) in matches.iter().enumerate() {
        let (x, y) = (src.x.round(), src.y.round());
        if !(x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64) {
            continue;
        }
        let Some(d) = depth_src.at(x as usize, y as usize) else { continue };
        corrs.push(Correspondence {
            point3d: unproject(src, d, k)?,
            pixel: *tgt,
        });
        origin.push(i);
    }
    if corrs.is_empty() {
        return Err(Error::invalid("no match lands on valid source depth"));
    }
    let mut result = pnp_ransac(&corrs, k, config)?;
    result.inliers = result.inliers.iter().map(|&i| origin[i]).collect();
    Ok((RelativeTransform::new(result.pose), result))
}
