//! Full-frame and masked image quality metrics, plus the
//! difficulty/distortion curve.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::FlowField;
use crate::grid::{Frame, Grid, Mask};
use crate::warp::WarpResult;
use crate::{Error, Result};

/// Reported for identical inputs instead of an infinite PSNR.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn compensated_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}

fn check_mask(a: &Frame, mask: Option<&Mask>) -> Result<()> {
    if let Some(m) = mask {
        a.check_dims(m)?;
        if m.count() == 0 {
            return Err(Error::invalid("mask selects no pixels"));
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio over all channels of the selected pixels,
/// capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Frame, b: &Frame, mask: Option<&Mask>) -> Result<f64> {
    a.check_dims(b)?;
    check_mask(a, mask)?;
    let mut sq = Vec::with_capacity(a.len());
    for (i, (pa, pb)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
        if mask.is_some_and(|m| !m.as_slice()[i]) {
            continue;
        }
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            sq.push(d * d);
        }
    }
    if sq.is_empty() {
        return Err(Error::invalid("no pixels to compare"));
    }
    let mse = compensated_mean(&sq);
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * (255.0 / mse.sqrt()).log10()).min(PSNR_CAP_DB))
}

/// BT.601 luma in `[0, 255]`.
pub fn luma(frame: &Frame) -> Grid<f64> {
    frame.map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Local SSIM at every valid window center (no padding), row-major over
/// the `(W−10)×(H−10)` interior. Entry `(x, y)` is centered at
/// `(x + 5, y + 5)`.
pub fn ssim_map(a: &Frame, b: &Frame) -> Result<Grid<f64>> {
    a.check_dims(b)?;
    let (w, h) = a.dims();
    if w.min(h) < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let la = luma(a);
    let lb = luma(b);
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;

    // five moment images, horizontally filtered then vertically
    let sources: [Box<dyn Fn(usize) -> f64>; 5] = [
        Box::new(|i| la.as_slice()[i]),
        Box::new(|i| lb.as_slice()[i]),
        Box::new(|i| la.as_slice()[i] * la.as_slice()[i]),
        Box::new(|i| lb.as_slice()[i] * lb.as_slice()[i]),
        Box::new(|i| la.as_slice()[i] * lb.as_slice()[i]),
    ];
    let mut moments = Vec::with_capacity(5);
    for src in &sources {
        let mut horiz = vec![0.0; ow * h];
        for y in 0..h {
            for x in 0..ow {
                let mut acc = 0.0;
                for (j, t) in taps.iter().enumerate() {
                    acc += t * src(y * w + x + j);
                }
                horiz[y * ow + x] = acc;
            }
        }
        let mut full = vec![0.0; ow * oh];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for (j, t) in taps.iter().enumerate() {
                    acc += t * horiz[(y + j) * ow + x];
                }
                full[y * ow + x] = acc;
            }
        }
        moments.push(full);
    }
    let map = Grid::from_fn(ow, oh, |x, y| {
        let i = y * ow + x;
        ssim_from_moments(moments[0][i], moments[1][i], moments[2][i], moments[3][i], moments[4][i])
    });
    Ok(map)
}

#[inline]
pub(crate) fn ssim_from_moments(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64) -> f64 {
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
    let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
    num / den
}

/// Mean local SSIM on luma with an 11×11 Gaussian window (σ = 1.5). With a
/// mask, only window centers inside the mask are averaged.
pub fn ssim(a: &Frame, b: &Frame, mask: Option<&Mask>) -> Result<f64> {
    check_mask(a, mask)?;
    let map = ssim_map(a, b)?;
    let r = SSIM_WINDOW / 2;
    let vals: Vec<f64> = match mask {
        None => map.as_slice().to_vec(),
        Some(m) => {
            let mut v = Vec::new();
            for y in 0..map.height() {
                for x in 0..map.width() {
                    if *m.get(x + r, y + r) {
                        v.push(*map.get(x, y));
                    }
                }
            }
            v
        }
    };
    if vals.is_empty() {
        return Err(Error::invalid("mask contains no SSIM window centers"));
    }
    Ok(compensated_mean(&vals))
}

/// Co-visible / occluded split of a warped frame: occluded pixels are the
/// warp's holes, co-visible pixels everything else.
pub fn occlusion_masks(flow: &FlowField, warp: &WarpResult) -> Result<(Mask, Mask)> {
    if flow.dims() != warp.hole_mask.dims() {
        return Err(Error::dims(flow.dims(), warp.hole_mask.dims()));
    }
    let occluded = warp.hole_mask.clone();
    let covisible = occluded.map(|h| !h);
    Ok((covisible, occluded))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Distance {
    /// `1 − SSIM`.
    #[default]
    OneMinusSsim,
    /// Mean squared error over channels, normalized to `[0, 1]` by 255².
    Mse,
    /// Mean absolute error over channels, normalized to `[0, 1]` by 255.
    MeanAbsolute,
}

impl Distance {
    pub fn eval(&self, a: &Frame, b: &Frame) -> Result<f64> {
        a.check_dims(b)?;
        let diffs = || {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .flat_map(|(p, q)| (0..3).map(move |c| p[c] as f64 - q[c] as f64))
        };
        let n = (a.len() * 3) as f64;
        match self {
            Distance::OneMinusSsim => Ok(1.0 - ssim(a, b, None)?),
            Distance::Mse => Ok(compensated_sum(diffs().map(|d| d * d)) / n / (255.0 * 255.0)),
            Distance::MeanAbsolute => Ok(compensated_sum(diffs().map(f64::abs)) / n / 255.0),
        }
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1-ssim" | "one-minus-ssim" | "ssim" => Ok(Self::OneMinusSsim),
            "mse" => Ok(Self::Mse),
            "mae" | "mean-absolute" => Ok(Self::MeanAbsolute),
            other => Err(Error::invalid(format!("unknown distance `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "bin")]
    pub difficulty_bin_center: f64,
    #[serde(rename = "mean")]
    pub mean_distortion: f64,
    pub count: usize,
    pub mean_difficulty: f64,
}

/// Bins `(difficulty, distortion)` samples into `bins` equal-width bins over
/// the observed difficulty range; empty bins are omitted.
pub fn distortion_curve(samples: &[(f64, f64)], bins: usize) -> Result<Vec<CurvePoint>> {
    if samples.is_empty() {
        return Err(Error::invalid("difficulty/distortion needs at least one sample"));
    }
    if bins == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    if samples.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::invalid("non-finite difficulty or distortion"));
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); bins];
    for &(d, e) in samples {
        let b = if width > 0.0 {
            (((d - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        members[b].push((d, e));
    }
    Ok(members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(b, m)| {
            let center = if width > 0.0 { lo + (b as f64 + 0.5) * width } else { lo };
            let dist: Vec<f64> = m.iter().map(|s| s.1).collect();
            let diff: Vec<f64> = m.iter().map(|s| s.0).collect();
            CurvePoint {
                difficulty_bin_center: center,
                mean_distortion: compensated_mean(&dist),
                count: m.len(),
                mean_difficulty: compensated_mean(&diff),
            }
        })
        .collect())
}

/// Difficulty is `distance(input, target)`, distortion is
/// `distance(generated, target)`.
pub fn difficulty_distortion(
    pairs: &[(Frame, Frame, Frame)],
    distance: Distance,
    bins: usize,
) -> Result<Vec<CurvePoint>> {
    if pairs.is_empty() {
        return Err(Error::invalid("difficulty/distortion needs at least one pair"));
    }
    let samples = pairs
        .iter()
        .map(|(input, generated, target)| Ok((distance.eval(input, target)?, distance.eval(generated, target)?)))
        .collect::<Result<Vec<_>>>()?;
    distortion_curve(&samples, bins)
}

/// Least-squares slope of mean distortion against bin center.
pub fn curve_slope(curve: &[CurvePoint]) -> Option<f64> {
    if curve.len() < 2 {
        return None;
    }
    let n = curve.len() as f64;
    let mx = curve.iter().map(|p| p.difficulty_bin_center).sum::<f64>() / n;
    let my = curve.iter().map(|p| p.mean_distortion).sum::<f64>() / n;
    let sxy: f64 = curve
        .iter()
        .map(|p| (p.difficulty_bin_center - mx) * (p.mean_distortion - my))
        .sum();
    let sxx: f64 = curve.iter().map(|p| (p.difficulty_bin_center - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    #[default]
    Full,
    Covisible,
    Occluded,
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "covisible" => Ok(Self::Covisible),
            "occluded" => Ok(Self::Occluded),
            other => Err(Error::invalid(format!(
                "unknown mask `{other}` (expected full, covisible or occluded)"
            ))),
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Covisible => "covisible",
            Self::Occluded => "occluded",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub per_frame: Vec<f64>,
    pub mean: f64,
}

impl MetricSeries {
    pub fn new(per_frame: Vec<f64>) -> Self {
        let mean = compensated_mean(&per_frame);
        Self { per_frame, mean }
    }
}

/// JSON evaluation report. External perceptual metrics can be merged into
/// `metrics` under their own names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, MetricSeries>,
    pub mask: MaskKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
}
