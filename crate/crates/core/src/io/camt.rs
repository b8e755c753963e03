//! CAMT tensors: `b"CAMT"`, u32 rank, u32 dims, then row-major f32 data,
//! all little-endian.

use std::path::Path;

use nalgebra::Vector3;

use super::{read_bytes, write_bytes, ByteReader};
use crate::geometry::{DepthMap, PointFrame, Pointmap};
use crate::grid::{FeatureMap, Grid};
use crate::{Error, Result};

const FORMAT: &str = "camt";
const MAGIC: &[u8; 4] = b"CAMT";
const MAX_RANK: u32 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!("tensor dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }
}

pub fn encode_camt(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_camt(bytes: &[u8]) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes, FORMAT);
    if r.take(4)? != MAGIC {
        return Err(r.malformed(0, "bad magic, expected `CAMT`"));
    }
    let rank = r.u32()?;
    if rank > MAX_RANK {
        return Err(r.malformed(4, format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    let mut n: usize = 1;
    for _ in 0..rank {
        let off = r.offset();
        let d = r.u32()? as usize;
        n = n.checked_mul(d).ok_or_else(|| r.malformed(off, "element count overflows"))?;
        dims.push(d);
    }
    let bytes_needed = n.checked_mul(4).ok_or_else(|| r.malformed(8, "element count overflows"))?;
    r.require(bytes_needed)?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.f32()?);
    }
    r.expect_end()?;
    Ok(Tensor { dims, data })
}

pub fn read_camt(path: &Path) -> Result<Tensor> {
    decode_camt(&read_bytes(path)?)
}

pub fn write_camt(path: &Path, t: &Tensor) -> Result<()> {
    write_bytes(path, &encode_camt(t))
}

fn hw(t: &Tensor, channels: Option<usize>) -> Result<(usize, usize, usize)> {
    match (t.dims.as_slice(), channels) {
        ([h, w], None | Some(1)) => Ok((*h, *w, 1)),
        ([h, w, c], None) => Ok((*h, *w, *c)),
        ([h, w, c], Some(want)) if *c == want => Ok((*h, *w, *c)),
        (d, want) => Err(Error::invalid(format!(
            "tensor dims {d:?} are not H×W{}",
            want.map(|c| format!("×{c}")).unwrap_or_default()
        ))),
    }
}

/// `[H, W, 3]`; invalid points are NaN.
pub fn pointmap_to_tensor(pm: &Pointmap) -> Tensor {
    let (w, h) = pm.dims();
    let mut data = Vec::with_capacity(w * h * 3);
    for (p, &ok) in pm.points.as_slice().iter().zip(pm.valid.as_slice()) {
        if ok {
            data.extend([p.x as f32, p.y as f32, p.z as f32]);
        } else {
            data.extend([f32::NAN; 3]);
        }
    }
    Tensor { dims: vec![h, w, 3], data }
}

/// Points with any non-finite coordinate are invalid.
pub fn tensor_to_pointmap(t: &Tensor, frame: PointFrame) -> Result<Pointmap> {
    let (h, w, _) = hw(t, Some(3))?;
    let points: Vec<Vector3<f64>> = t
        .data
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    let valid = points.iter().map(|p| p.iter().all(|v| v.is_finite())).collect();
    Ok(Pointmap {
        points: Grid::from_vec(w, h, points)?,
        valid: Grid::from_vec(w, h, valid)?,
        frame,
    })
}

pub fn feature_map_to_tensor(f: &FeatureMap) -> Tensor {
    Tensor {
        dims: vec![f.height(), f.width(), f.channels()],
        data: f.as_slice().iter().map(|&v| v as f32).collect(),
    }
}

pub fn tensor_to_feature_map(t: &Tensor) -> Result<FeatureMap> {
    let (h, w, c) = hw(t, None)?;
    FeatureMap::from_vec(w, h, c, t.data.iter().map(|&v| v as f64).collect())
}

/// `[H, W]` of raw samples (depth buffers keep `+inf` for holes).
pub fn depth_to_tensor(values: &Grid<f64>) -> Tensor {
    Tensor {
        dims: vec![values.height(), values.width()],
        data: values.as_slice().iter().map(|&v| v as f32).collect(),
    }
}

pub fn tensor_to_depth(t: &Tensor) -> Result<DepthMap> {
    let (h, w, _) = hw(t, Some(1))?;
    Ok(DepthMap::from_values(Grid::from_vec(
        w,
        h,
        t.data.iter().map(|&v| v as f64).collect(),
    )?))
}
