//! Sinusoidal positional-encoding maps and their flow-based re-alignment.
//!
//! Channel layout for `C` channels: the first `C/2` encode the column `u`,
//! the last `C/2` the row `v`. Within each half, pair `i` holds
//! `sin(p / base^(2i/(C/2)))` at channel `2i` and the matching cosine at
//! `2i + 1`.

use crate::geometry::FlowField;
use crate::grid::{FeatureMap, Mask};
use crate::warp::{backward_sample, sample_bilinear};
use crate::{Error, Result};

pub const DEFAULT_BASE: f64 = 10_000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PeMap {
    pub values: FeatureMap,
    pub base: f64,
}

impl PeMap {
    pub fn channels(&self) -> usize {
        self.values.channels()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }
}

/// Encodes one axis position into `out` (length `C/2`).
fn encode_axis(pos: f64, base: f64, out: &mut [f64]) {
    let half = out.len();
    for i in 0..half / 2 {
        let freq = base.powf((2 * i) as f64 / half as f64);
        let a = pos / freq;
        out[2 * i] = a.sin();
        out[2 * i + 1] = a.cos();
    }
}

pub fn sinusoidal_pe(height: usize, width: usize, channels: usize, base: f64) -> Result<PeMap> {
    if channels == 0 || !channels.is_multiple_of(4) {
        return Err(Error::invalid(format!(
            "channel count must be a positive multiple of 4, got {channels}"
        )));
    }
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::invalid(format!("frequency base must be positive, got {base}")));
    }
    let half = channels / 2;
    let mut values = FeatureMap::zeros(width, height, channels);
    let mut u_code = vec![0.0; half];
    let mut v_code = vec![0.0; half];
    for y in 0..height {
        encode_axis(y as f64, base, &mut v_code);
        for x in 0..width {
            encode_axis(x as f64, base, &mut u_code);
            let px = values.pixel_mut(x, y);
            px[..half].copy_from_slice(&u_code);
            px[half..].copy_from_slice(&v_code);
        }
    }
    Ok(PeMap { values, base })
}

/// `PE′(u,v) = PE(u + f_x, v + f_y)` via bilinear gather; pixels with
/// invalid flow are zero and flagged `false` in the returned mask.
pub fn realign_pe(pe: &PeMap, flow: &FlowField) -> Result<(PeMap, Mask)> {
    let (values, valid) = backward_sample(&pe.values, flow)?;
    Ok((PeMap { values, base: pe.base }, valid))
}

/// Derivatives of the re-aligned encoding at pixel `(x, y)` with respect to
/// the two flow components. Away from bilinear cell boundaries these are
/// the exact partials of the piecewise-bilinear lookup.
pub fn realign_gradient(pe: &PeMap, flow: &FlowField, x: usize, y: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if pe.dims() != flow.dims() {
        return Err(Error::dims(flow.dims(), pe.dims()));
    }
    let c = pe.channels();
    let f = flow.vectors.get(x, y);
    let mut value = vec![0.0; c];
    let mut dx = vec![0.0; c];
    let mut dy = vec![0.0; c];
    if *flow.valid.get(x, y) {
        sample_bilinear(&pe.values, x as f64 + f.x, y as f64 + f.y, &mut value, Some((&mut dx, &mut dy)));
    }
    Ok((dx, dy))
}

/// Identity coordinate grid normalized to `[0, 1]` per axis (channel 0 is
/// `u/(W−1)`, channel 1 is `v/(H−1)`) and the same grid gathered through
/// `flow`.
pub fn coordinate_maps(height: usize, width: usize, flow: &FlowField) -> Result<(FeatureMap, FeatureMap, Mask)> {
    if flow.dims() != (width, height) {
        return Err(Error::dims((width, height), flow.dims()));
    }
    let norm = |p: usize, n: usize| if n > 1 { p as f64 / (n - 1) as f64 } else { 0.0 };
    let mut ident = FeatureMap::zeros(width, height, 2);
    for y in 0..height {
        for x in 0..width {
            let px = ident.pixel_mut(x, y);
            px[0] = norm(x, width);
            px[1] = norm(y, height);
        }
    }
    let (warped, valid) = backward_sample(&ident, flow)?;
    Ok((ident, warped, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn origin_encodes_sin0_cos1() {
        let pe = sinusoidal_pe(3, 5, 8, DEFAULT_BASE).unwrap();
        let px = pe.values.pixel(0, 0);
        for i in 0..4 {
            assert_eq!(px[2 * i], 0.0);
            assert_eq!(px[2 * i + 1], 1.0);
        }
    }

    #[test]
    fn channel_zero_at_u1() {
        let pe = sinusoidal_pe(4, 4, 8, 10_000.0).unwrap();
        assert!((pe.values.at(1, 0, 0) - 0.84147).abs() < 1e-5);
        assert_eq!(pe.values.at(1, 0, 0), 1f64.sin());
        // second u pair uses frequency base^(2/4) = 100
        assert_eq!(pe.values.at(1, 0, 2), (1.0 / 100.0f64).sin());
        // v half starts at channel 4
        assert_eq!(pe.values.at(0, 1, 4), 1f64.sin());
        assert_eq!(pe.values.at(0, 1, 5), 1f64.cos());
    }

    #[test]
    fn rejects_bad_channel_counts() {
        assert!(sinusoidal_pe(4, 4, 6, DEFAULT_BASE).is_err());
        assert!(sinusoidal_pe(4, 4, 0, DEFAULT_BASE).is_err());
        assert!(sinusoidal_pe(4, 4, 8, 0.0).is_err());
    }

    #[test]
    fn zero_flow_realign_is_bitwise_identity() {
        let pe = sinusoidal_pe(6, 7, 16, DEFAULT_BASE).unwrap();
        let (out, valid) = realign_pe(&pe, &FlowField::zeros(7, 6)).unwrap();
        assert_eq!(out, pe);
        assert_eq!(valid.count(), 42);
    }

    #[test]
    fn integer_shift_on_interior() {
        let pe = sinusoidal_pe(5, 10, 8, DEFAULT_BASE).unwrap();
        let (out, _) = realign_pe(&pe, &FlowField::uniform(10, 5, Vector2::new(3.0, 0.0))).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(out.values.pixel(x, y), pe.values.pixel(x + 3, y));
            }
        }
    }

    #[test]
    fn half_pixel_is_neighbor_mean() {
        let pe = sinusoidal_pe(4, 8, 8, 10.0).unwrap();
        let (out, _) = realign_pe(&pe, &FlowField::uniform(8, 4, Vector2::new(0.5, 0.0))).unwrap();
        for y in 0..4 {
            for x in 0..7 {
                for c in 0..8 {
                    let mean = 0.5 * (pe.values.at(x, y, c) + pe.values.at(x + 1, y, c));
                    assert!((out.values.at(x, y, c) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn coordinate_map_endpoints_and_shift() {
        let (w, h) = (16, 9);
        let (ident, warped, _) = coordinate_maps(h, w, &FlowField::zeros(w, h)).unwrap();
        assert_eq!(ident, warped);
        assert_eq!(ident.pixel(0, 0), &[0.0, 0.0]);
        assert_eq!(ident.pixel(w - 1, h - 1), &[1.0, 1.0]);

        let shift = Vector2::new(w as f64 / 2.0, 0.0);
        let (ident, warped, _) = coordinate_maps(h, w, &FlowField::uniform(w, h, shift)).unwrap();
        let du = (w as f64 / 2.0) / (w - 1) as f64;
        for x in 0..w {
            let expected = (ident.at(x, 0, 0) + du).min(1.0);
            assert!((warped.at(x, 0, 0) - expected).abs() < 1e-12);
            assert_eq!(warped.at(x, 0, 1), ident.at(x, 0, 1));
        }
        assert!(coordinate_maps(h, w + 1, &FlowField::zeros(w, h)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pe = sinusoidal_pe(8, 8, 8, 4.0).unwrap();
        let mut flow = FlowField::uniform(8, 8, Vector2::new(1.3, 0.7));
        flow.vectors.set(2, 3, Vector2::new(-0.4, 2.2));
        let h = 1e-4;
        for (x, y) in [(2usize, 3usize), (4, 4), (1, 1)] {
            let (dx, dy) = realign_gradient(&pe, &flow, x, y).unwrap();
            for (axis, analytic) in [(0, &dx), (1, &dy)] {
                let mut plus = flow.clone();
                let mut minus = flow.clone();
                let base = *flow.vectors.get(x, y);
                let e = if axis == 0 { Vector2::new(h, 0.0) } else { Vector2::new(0.0, h) };
                plus.vectors.set(x, y, base + e);
                minus.vectors.set(x, y, base - e);
                let (p, _) = realign_pe(&pe, &plus).unwrap();
                let (m, _) = realign_pe(&pe, &minus).unwrap();
                for c in 0..8 {
                    let fd = (p.values.at(x, y, c) - m.values.at(x, y, c)) / (2.0 * h);
                    assert!((fd - analytic[c]).abs() < 1e-5, "c={c} fd={fd} an={}", analytic[c]);
                }
            }
        }
    }
}
