//! Middlebury colour-wheel rendering of flow fields.

use reframe_core::geometry::FlowField;
use reframe_core::{Frame, Grid};

const SEGMENTS: [(usize, [f64; 3], [f64; 3]); 6] = [
    (15, [255.0, 0.0, 0.0], [255.0, 255.0, 0.0]),
    (6, [255.0, 255.0, 0.0], [0.0, 255.0, 0.0]),
    (4, [0.0, 255.0, 0.0], [0.0, 255.0, 255.0]),
    (11, [0.0, 255.0, 255.0], [0.0, 0.0, 255.0]),
    (13, [0.0, 0.0, 255.0], [255.0, 0.0, 255.0]),
    (6, [255.0, 0.0, 255.0], [255.0, 0.0, 0.0]),
];

fn wheel() -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(55);
    for (n, from, to) in SEGMENTS {
        for i in 0..n {
            let s = i as f64 / n as f64;
            out.push([0, 1, 2].map(|c| from[c] + (to[c] - from[c]) * s));
        }
    }
    out
}

/// Hue encodes direction, saturation the magnitude relative to the largest
/// valid vector. Invalid pixels are black.
pub fn flow_to_color(flow: &FlowField) -> Frame {
    let wheel = wheel();
    let n = wheel.len();
    let max = flow
        .vectors
        .as_slice()
        .iter()
        .zip(flow.valid.as_slice())
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| v.norm())
        .fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let (w, h) = flow.dims();
    Grid::from_fn(w, h, |x, y| {
        if !*flow.valid.get(x, y) {
            return [0, 0, 0];
        }
        let v = flow.vectors.get(x, y) * scale;
        let rad = v.norm().min(1.0);
        let angle = (-v.y).atan2(-v.x) / std::f64::consts::PI;
        let fk = (angle + 1.0) / 2.0 * (n - 1) as f64;
        let k0 = fk.floor() as usize % n;
        let k1 = (k0 + 1) % n;
        let f = fk - fk.floor();
        [0, 1, 2].map(|c| {
            let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
            (255.0 * (1.0 - rad * (1.0 - col))).round() as u8
        })
    })
}
