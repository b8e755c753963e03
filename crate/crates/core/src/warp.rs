//! Z-buffered forward reprojection, multi-frame static aggregation and the
//! bilinear gather kernel.
//!
//! Splat conflicts are resolved by a total order so results never depend on
//! iteration schedule: smaller target depth first, then (for aggregation)
//! points of the reference frame, then frame index, then row-major source
//! index.

use nalgebra::Vector2;

use crate::camera::{project, Intrinsics, PoseSE3};
use crate::geometry::{DynamicMask, FlowField, PointFrame, Pointmap};
use crate::grid::{FeatureMap, Frame, Grid, Mask};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub image: Frame,
    /// Target-camera depth per pixel, `+∞` where nothing landed.
    pub depth_buffer: Grid<f64>,
    /// `true` where no source pixel landed.
    pub hole_mask: Mask,
}

impl WarpResult {
    fn empty(width: usize, height: usize) -> Self {
        Self {
            image: Grid::new(width, height, [0, 0, 0]),
            depth_buffer: Grid::new(width, height, f64::INFINITY),
            hole_mask: Grid::new(width, height, true),
        }
    }

    pub fn hole_count(&self) -> usize {
        self.hole_mask.count()
    }

    pub fn hole_fraction(&self) -> f64 {
        if self.hole_mask.is_empty() {
            return 0.0;
        }
        self.hole_count() as f64 / self.hole_mask.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SplatMode {
    /// Each source pixel lands on the nearest target pixel.
    #[default]
    Nearest,
    /// Each source pixel spreads over its 2×2 neighborhood with bilinear
    /// weights; only contributions within 1% of the front depth blend.
    Bilinear,
}

const BLEND_DEPTH_TOLERANCE: f64 = 0.01;

/// Target pixel of a splat, or `None` when it falls outside the image.
#[inline]
fn landing(x: usize, y: usize, flow: &Vector2<f64>, width: usize, height: usize) -> Option<(usize, usize)> {
    let tx = (x as f64 + flow.x).round();
    let ty = (y as f64 + flow.y).round();
    if tx >= 0.0 && ty >= 0.0 && tx < width as f64 && ty < height as f64 {
        Some((tx as usize, ty as usize))
    } else {
        None
    }
}

/// Splat key ordering: depth, then rank, then frame, then source index.
#[derive(Clone, Copy, Debug, PartialEq)]
struct SplatKey {
    depth: f64,
    rank: u8,
    frame: usize,
    index: usize,
}

impl SplatKey {
    #[inline]
    fn beats(&self, other: &SplatKey) -> bool {
        (self.depth, self.rank, self.frame, self.index) < (other.depth, other.rank, other.frame, other.index)
    }
}

struct ZBuffer {
    result: WarpResult,
    keys: Vec<Option<SplatKey>>,
}

impl ZBuffer {
    fn new(width: usize, height: usize) -> Self {
        Self {
            result: WarpResult::empty(width, height),
            keys: vec![None; width * height],
        }
    }

    #[inline]
    fn splat(&mut self, tx: usize, ty: usize, key: SplatKey, color: [u8; 3]) {
        let i = self.result.image.index(tx, ty);
        if self.keys[i].is_none_or(|cur| key.beats(&cur)) {
            self.keys[i] = Some(key);
            self.result.image.as_mut_slice()[i] = color;
            self.result.depth_buffer.as_mut_slice()[i] = key.depth;
            self.result.hole_mask.as_mut_slice()[i] = false;
        }
    }
}

/// Per-frame reprojection with nearest-pixel splatting.
pub fn forward_warp(frame: &Frame, flow: &FlowField) -> Result<WarpResult> {
    forward_warp_with(frame, flow, SplatMode::Nearest)
}

pub fn forward_warp_with(frame: &Frame, flow: &FlowField, mode: SplatMode) -> Result<WarpResult> {
    frame.check_dims(&flow.vectors)?;
    match mode {
        SplatMode::Nearest => Ok(forward_warp_nearest(frame, flow)),
        SplatMode::Bilinear => Ok(forward_warp_bilinear(frame, flow)),
    }
}

fn forward_warp_nearest(frame: &Frame, flow: &FlowField) -> WarpResult {
    let (w, h) = frame.dims();
    let mut zb = ZBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = frame.index(x, y);
            if !flow.valid.as_slice()[i] {
                continue;
            }
            let Some((tx, ty)) = landing(x, y, &flow.vectors.as_slice()[i], w, h) else {
                continue;
            };
            let key = SplatKey {
                depth: flow.target_depth.as_slice()[i],
                rank: 0,
                frame: 0,
                index: i,
            };
            zb.splat(tx, ty, key, frame.as_slice()[i]);
        }
    }
    zb.result
}

fn bilinear_footprint(x: usize, y: usize, v: &Vector2<f64>, w: usize, h: usize) -> impl Iterator<Item = (usize, usize, f64)> {
    let px = x as f64 + v.x;
    let py = y as f64 + v.y;
    let x0 = px.floor();
    let y0 = py.floor();
    let ax = px - x0;
    let ay = py - y0;
    [
        (x0, y0, (1.0 - ax) * (1.0 - ay)),
        (x0 + 1.0, y0, ax * (1.0 - ay)),
        (x0, y0 + 1.0, (1.0 - ax) * ay),
        (x0 + 1.0, y0 + 1.0, ax * ay),
    ]
    .into_iter()
    .filter(move |&(tx, ty, wgt)| wgt > 0.0 && tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64)
    .map(|(tx, ty, wgt)| (tx as usize, ty as usize, wgt))
}

fn forward_warp_bilinear(frame: &Frame, flow: &FlowField) -> WarpResult {
    let (w, h) = frame.dims();
    let mut front = vec![f64::INFINITY; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = frame.index(x, y);
            if !flow.valid.as_slice()[i] {
                continue;
            }
            let d = flow.target_depth.as_slice()[i];
            for (tx, ty, _) in bilinear_footprint(x, y, &flow.vectors.as_slice()[i], w, h) {
                let t = ty * w + tx;
                front[t] = front[t].min(d);
            }
        }
    }
    let mut acc = vec![[0.0f64; 4]; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = frame.index(x, y);
            if !flow.valid.as_slice()[i] {
                continue;
            }
            let d = flow.target_depth.as_slice()[i];
            let c = frame.as_slice()[i];
            for (tx, ty, wgt) in bilinear_footprint(x, y, &flow.vectors.as_slice()[i], w, h) {
                let t = ty * w + tx;
                if d <= front[t] * (1.0 + BLEND_DEPTH_TOLERANCE) {
                    let a = &mut acc[t];
                    a[0] += wgt * c[0] as f64;
                    a[1] += wgt * c[1] as f64;
                    a[2] += wgt * c[2] as f64;
                    a[3] += wgt;
                }
            }
        }
    }
    let mut out = WarpResult::empty(w, h);
    for (t, a) in acc.iter().enumerate() {
        if a[3] > 0.0 {
            let px = |v: f64| (v / a[3]).round().clamp(0.0, 255.0) as u8;
            out.image.as_mut_slice()[t] = [px(a[0]), px(a[1]), px(a[2])];
            out.depth_buffer.as_mut_slice()[t] = front[t];
            out.hole_mask.as_mut_slice()[t] = false;
        }
    }
    out
}

/// All-frame reprojection: static points of every frame plus all points of
/// frame `t`, splatted into the target camera through one shared z-buffer.
pub fn aggregate_all_frames(
    frames: &[Frame],
    pointmaps: &[Pointmap],
    dynamic_masks: &[DynamicMask],
    t: usize,
    target_pose: &PoseSE3,
    k: &Intrinsics,
) -> Result<WarpResult> {
    if frames.len() != pointmaps.len() || frames.len() != dynamic_masks.len() {
        return Err(Error::invalid(format!(
            "sequence lengths differ: {} frames, {} pointmaps, {} masks",
            frames.len(),
            pointmaps.len(),
            dynamic_masks.len()
        )));
    }
    if t >= frames.len() {
        return Err(Error::invalid(format!("frame {t} out of range (T = {})", frames.len())));
    }
    let (w, h) = k.dims();
    for (s, ((f, pm), m)) in frames.iter().zip(pointmaps).zip(dynamic_masks).enumerate() {
        if pm.frame != PointFrame::World {
            return Err(Error::invalid(format!("pointmap {s} is not in the world frame")));
        }
        if f.dims() != (w, h) || pm.dims() != (w, h) || m.mask.dims() != (w, h) {
            return Err(Error::dims((w, h), f.dims()));
        }
    }

    let mut zb = ZBuffer::new(w, h);
    for (s, ((frame, pm), dm)) in frames.iter().zip(pointmaps).zip(dynamic_masks).enumerate() {
        let reference = s == t;
        for y in 0..h {
            for x in 0..w {
                let i = frame.index(x, y);
                if !pm.valid.as_slice()[i] || (!reference && dm.mask.as_slice()[i]) {
                    continue;
                }
                let cam = target_pose.transform_point(&pm.points.as_slice()[i]);
                let Some(proj) = project(&cam, k) else { continue };
                let flow = proj.pixel - Vector2::new(x as f64, y as f64);
                let Some((tx, ty)) = landing(x, y, &flow, w, h) else { continue };
                let key = SplatKey {
                    depth: proj.depth,
                    rank: if reference { 0 } else { 1 },
                    frame: s,
                    index: i,
                };
                zb.splat(tx, ty, key, frame.as_slice()[i]);
            }
        }
    }
    Ok(zb.result)
}

/// Bilinear sample of channel data at a continuous position, clamped to the
/// borders. Also returns the partial derivatives with respect to `px` and
/// `py` (zero along an axis where the position is clamped).
pub fn sample_bilinear(grid: &FeatureMap, px: f64, py: f64, out: &mut [f64], grad: Option<(&mut [f64], &mut [f64])>) {
    let (w, h) = grid.dims();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let cx = px.clamp(0.0, max_x);
    let cy = py.clamp(0.0, max_y);
    let x0 = cx.floor();
    let y0 = cy.floor();
    let ax = cx - x0;
    let ay = cy - y0;
    let x0i = x0 as usize;
    let y0i = y0 as usize;
    let x1i = (x0i + 1).min(w - 1);
    let y1i = (y0i + 1).min(h - 1);
    let g00 = grid.pixel(x0i, y0i);
    let g10 = grid.pixel(x1i, y0i);
    let g01 = grid.pixel(x0i, y1i);
    let g11 = grid.pixel(x1i, y1i);
    for c in 0..grid.channels() {
        out[c] = (1.0 - ax) * (1.0 - ay) * g00[c]
            + ax * (1.0 - ay) * g10[c]
            + (1.0 - ax) * ay * g01[c]
            + ax * ay * g11[c];
    }
    if let Some((dx, dy)) = grad {
        let free_x = px > 0.0 && px < max_x;
        let free_y = py > 0.0 && py < max_y;
        for c in 0..grid.channels() {
            dx[c] = if free_x {
                (1.0 - ay) * (g10[c] - g00[c]) + ay * (g11[c] - g01[c])
            } else {
                0.0
            };
            dy[c] = if free_y {
                (1.0 - ax) * (g01[c] - g00[c]) + ax * (g11[c] - g10[c])
            } else {
                0.0
            };
        }
    }
}

/// Gathers `grid` at `(u + f_x, v + f_y)` with bilinear weights and border
/// clamping. Pixels with invalid flow get zeros and `false` in the returned
/// validity mask.
pub fn backward_sample(grid: &FeatureMap, flow: &FlowField) -> Result<(FeatureMap, Mask)> {
    if grid.dims() != flow.dims() {
        return Err(Error::dims(flow.dims(), grid.dims()));
    }
    let (w, h) = grid.dims();
    let mut out = FeatureMap::zeros(w, h, grid.channels());
    let mut valid = Grid::new(w, h, false);
    if w == 0 || h == 0 {
        return Ok((out, valid));
    }
    for y in 0..h {
        for x in 0..w {
            if !*flow.valid.get(x, y) {
                continue;
            }
            let f = flow.vectors.get(x, y);
            if !f.x.is_finite() || !f.y.is_finite() {
                continue;
            }
            sample_bilinear(grid, x as f64 + f.x, y as f64 + f.y, out.pixel_mut(x, y), None);
            valid.set(x, y, true);
        }
    }
    Ok((out, valid))
}
