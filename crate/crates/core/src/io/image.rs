//! PNG frames, binary masks and 16-bit depth.
//!
//! 16-bit depth stores `round(d / scale)` with 0 for invalid pixels; the
//! scale lives in a sidecar text file `<png path>.scale`.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use super::{read_bytes, write_bytes};
use crate::geometry::DepthMap;
use crate::grid::{Frame, Grid, Mask};
use crate::{Error, Result};

/// Metres per unit when no sidecar is present (millimetre depth PNGs).
pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

fn encode(w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn decode(bytes: &[u8], expand: bool) -> Result<Decoded> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    if expand {
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    }
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(png_err)?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

pub fn encode_frame_png(frame: &Frame) -> Result<Vec<u8>> {
    let data: Vec<u8> = frame.as_slice().iter().flatten().copied().collect();
    encode(frame.width(), frame.height(), png::ColorType::Rgb, png::BitDepth::Eight, &data)
}

/// Accepts any 8/16-bit colour type; gray is replicated and alpha dropped.
pub fn decode_frame_png(bytes: &[u8]) -> Result<Frame> {
    let d = decode(bytes, true)?;
    let channels = match d.color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Png("palette not expanded".into())),
    };
    let pixels = d
        .data
        .chunks_exact(channels)
        .map(|c| if channels < 3 { [c[0]; 3] } else { [c[0], c[1], c[2]] })
        .collect();
    Grid::from_vec(d.width, d.height, pixels)
}

/// 1-bit grayscale, white for `true`.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let (w, h) = mask.dims();
    let stride = w.div_ceil(8);
    let mut data = vec![0u8; stride * h];
    for y in 0..h {
        for x in 0..w {
            if *mask.get(x, y) {
                data[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    encode(w, h, png::ColorType::Grayscale, png::BitDepth::One, &data)
}

/// Any image; a pixel is set when its first channel is at least half scale.
pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask> {
    let f = decode_frame_png(bytes)?;
    Ok(f.map(|p| p[0] >= 128))
}

pub fn encode_depth_png16(depth: &DepthMap, scale: f64) -> Result<Vec<u8>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("depth scale must be positive, got {scale}")));
    }
    let (w, h) = depth.dims();
    let mut data = Vec::with_capacity(w * h * 2);
    for y in 0..h {
        for x in 0..w {
            let q = depth.at(x, y).map_or(0, |d| (d / scale).round().clamp(1.0, 65535.0) as u16);
            data.extend_from_slice(&q.to_be_bytes());
        }
    }
    encode(w, h, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

pub fn decode_depth_png16(bytes: &[u8], scale: f64) -> Result<DepthMap> {
    let d = decode(bytes, false)?;
    if d.color != png::ColorType::Grayscale || d.depth != png::BitDepth::Sixteen {
        return Err(Error::Png(format!(
            "depth PNG must be 16-bit grayscale, found {:?} {:?}",
            d.color, d.depth
        )));
    }
    let values = d
        .data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
        .collect();
    Ok(DepthMap::from_values(Grid::from_vec(d.width, d.height, values)?))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale");
    PathBuf::from(s)
}

pub fn read_frame_png(path: &Path) -> Result<Frame> {
    decode_frame_png(&read_bytes(path)?)
}

pub fn write_frame_png(path: &Path, frame: &Frame) -> Result<()> {
    write_bytes(path, &encode_frame_png(frame)?)
}

pub fn read_mask_png(path: &Path) -> Result<Mask> {
    decode_mask_png(&read_bytes(path)?)
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    write_bytes(path, &encode_mask_png(mask)?)
}

/// Reads the depth and its `.scale` sidecar, falling back to
/// [`DEFAULT_DEPTH_SCALE`] when the sidecar is absent.
pub fn read_depth_png16(path: &Path) -> Result<DepthMap> {
    let side = sidecar(path);
    let scale = if side.exists() {
        let text = String::from_utf8_lossy(&read_bytes(&side)?).into_owned();
        text.trim()
            .parse::<f64>()
            .ok()
            .filter(|s| *s > 0.0 && s.is_finite())
            .ok_or_else(|| Error::Malformed {
                format: "depth scale sidecar",
                offset: 0,
                reason: format!("`{}` is not a positive number", text.trim()),
            })?
    } else {
        DEFAULT_DEPTH_SCALE
    };
    decode_depth_png16(&read_bytes(path)?, scale)
}

pub fn write_depth_png16(path: &Path, depth: &DepthMap, scale: f64) -> Result<()> {
    write_bytes(path, &encode_depth_png16(depth, scale)?)?;
    write_bytes(&sidecar(path), format!("{scale}\n").as_bytes())
}
