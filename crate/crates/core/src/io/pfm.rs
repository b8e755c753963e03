//! Single-channel PFM (`Pf`). Rows are stored bottom-to-top; a negative
//! scale field means little-endian samples. Samples are written verbatim,
//! including non-positive or non-finite (invalid) depths.

use std::path::Path;

use super::{read_bytes, write_bytes, ByteReader};
use crate::geometry::DepthMap;
use crate::grid::Grid;
use crate::{Error, Result};

const FORMAT: &str = "pfm";

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(*depth.values.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

/// Reads one whitespace-delimited header token and the single whitespace
/// byte that ends it.
fn token<'a>(r: &mut ByteReader<'a>) -> Result<(u64, &'a str)> {
    let start = r.offset();
    let mut len = 0usize;
    loop {
        let b = r.take(1)?[0];
        if b.is_ascii_whitespace() {
            if len == 0 {
                return Err(r.malformed(start, "unexpected whitespace in header"));
            }
            break;
        }
        if !b.is_ascii_graphic() {
            return Err(r.malformed(r.offset() - 1, "non-ASCII byte in header"));
        }
        len += 1;
    }
    let bytes = r.slice(start as usize, start as usize + len);
    Ok((start, std::str::from_utf8(bytes).expect("ascii graphic")))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut r = ByteReader::new(bytes, FORMAT);
    let (off, magic) = token(&mut r)?;
    if magic != "Pf" {
        return Err(r.malformed(off, format!("expected single-channel magic `Pf`, found `{magic}`")));
    }
    let dim = |r: &mut ByteReader<'_>, name: &str| -> Result<usize> {
        let (off, t) = token(r)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(r.malformed(off, format!("invalid {name} `{t}`"))),
        }
    };
    let w = dim(&mut r, "width")?;
    let h = dim(&mut r, "height")?;
    let (off, t) = token(&mut r)?;
    let scale: f64 = t
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| r.malformed(off, format!("invalid scale `{t}`")))?;
    let little = scale < 0.0;
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(4)).ok_or_else(|| r.malformed(off, "image too large"))?;
    r.require(n)?;
    let mut values = Grid::new(w, h, 0.0);
    for y in (0..h).rev() {
        for x in 0..w {
            let b: [u8; 4] = r.take(4)?.try_into().unwrap();
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            values.set(x, y, v as f64);
        }
    }
    r.expect_end()?;
    Ok(DepthMap::from_values(values))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_pfm(depth))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Malformed { format, offset, reason } => Error::Malformed {
            format,
            offset,
            reason: format!("{reason} ({})", path.display()),
        },
        other => other,
    }
}
