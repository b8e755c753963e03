//! Middlebury `.flo`: float magic 202021.25, i32 width and height, then
//! interleaved `(u, v)` f32 pairs, all little-endian. Invalid vectors are
//! stored as `1e10` and any component above `1e9` in magnitude reads back
//! as invalid.

use std::path::Path;

use nalgebra::Vector2;

use super::{read_bytes, write_bytes, ByteReader};
use crate::geometry::FlowField;
use crate::grid::Grid;
use crate::Result;

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_INVALID: f32 = 1e10;
const INVALID_ABOVE: f32 = 1e9;
const FORMAT: &str = "flo";

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(12 + w * h * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (v, &ok) in flow.vectors.as_slice().iter().zip(flow.valid.as_slice()) {
        let (u, v) = if ok { (v.x as f32, v.y as f32) } else { (FLO_INVALID, FLO_INVALID) };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Target depth is not stored in `.flo`; it decodes as NaN.
pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let mut r = ByteReader::new(bytes, FORMAT);
    let magic = r.f32()?;
    if magic != FLO_MAGIC {
        return Err(r.malformed(0, format!("bad magic {magic}, expected {FLO_MAGIC}")));
    }
    let w = r.i32()?;
    let h = r.i32()?;
    if w <= 0 {
        return Err(r.malformed(4, format!("invalid width {w}")));
    }
    if h <= 0 {
        return Err(r.malformed(8, format!("invalid height {h}")));
    }
    let (w, h) = (w as usize, h as usize);
    r.require(w * h * 8)?;
    let mut vectors = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let u = r.f32()?;
        let v = r.f32()?;
        let ok = u.is_finite() && v.is_finite() && u.abs() <= INVALID_ABOVE && v.abs() <= INVALID_ABOVE;
        vectors.push(if ok { Vector2::new(u as f64, v as f64) } else { Vector2::zeros() });
        valid.push(ok);
    }
    r.expect_end()?;
    Ok(FlowField {
        vectors: Grid::from_vec(w, h, vectors)?,
        valid: Grid::from_vec(w, h, valid)?,
        target_depth: Grid::new(w, h, f64::NAN),
    })
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&read_bytes(path)?)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    write_bytes(path, &encode_flo(flow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn round_trip_with_invalid() {
        let mut f = FlowField::uniform(3, 2, Vector2::new(1.25, -0.5));
        f.valid.set(2, 1, false);
        let bytes = encode_flo(&f);
        assert_eq!(bytes.len(), 12 + 6 * 8);
        assert_eq!(&bytes[..4], b"PIEH");
        let back = decode_flo(&bytes).unwrap();
        assert_eq!(back.valid, f.valid);
        assert_eq!(*back.vectors.get(0, 0), Vector2::new(1.25, -0.5));
        assert_eq!(*back.vectors.get(2, 1), Vector2::zeros());
        assert_eq!(encode_flo(&back), bytes);
    }

    #[test]
    fn large_component_is_invalid() {
        let mut bytes = encode_flo(&FlowField::zeros(1, 1));
        bytes[16..20].copy_from_slice(&2e9f32.to_le_bytes());
        assert!(!*decode_flo(&bytes).unwrap().valid.get(0, 0));
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let mut bytes = encode_flo(&FlowField::zeros(2, 2));
        let full = bytes.len() as u64;
        bytes[0] ^= 1;
        assert!(matches!(decode_flo(&bytes), Err(Error::Malformed { offset: 0, .. })));
        bytes[0] ^= 1;
        bytes.pop();
        match decode_flo(&bytes) {
            Err(Error::Truncated { expected, actual, .. }) => assert_eq!((expected, actual), (full, full - 1)),
            other => panic!("{other:?}"),
        }
    }
}
