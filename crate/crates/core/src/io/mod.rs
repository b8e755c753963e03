//! File formats: PFM depth, 16-bit PNG depth, Middlebury `.flo` flow, the
//! camera JSON schema, CAMT tensors, PNG frames/masks and match lists.
//!
//! Every format has an in-memory `encode_*`/`decode_*` pair; the path-based
//! helpers only add file access and attach the path to I/O errors.

mod camera_json;
mod camt;
mod flo;
mod image;
mod pfm;

use std::path::Path;

pub use camera_json::{
    decode_camera_json, decode_matches, encode_camera_json, encode_matches, parse_frames_value, parse_json,
    parse_pose_value, read_camera_json, read_matches, write_camera_json, CameraFile, FrameEntry, IntrinsicsEntry,
};
pub use camt::{
    decode_camt, depth_to_tensor, encode_camt, feature_map_to_tensor, pointmap_to_tensor, read_camt, tensor_to_depth,
    tensor_to_feature_map, tensor_to_pointmap, write_camt, Tensor,
};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_INVALID, FLO_MAGIC};
pub use image::{
    decode_depth_png16, decode_frame_png, decode_mask_png, encode_depth_png16, encode_frame_png, encode_mask_png,
    read_depth_png16, read_frame_png, read_mask_png, write_depth_png16, write_frame_png, write_mask_png,
    DEFAULT_DEPTH_SCALE,
};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};

use crate::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Little-endian cursor that reports truncation against the total length.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Self { bytes, pos: 0, format }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                format: self.format,
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Fails unless `n` more bytes are available, reporting the full
    /// expected length.
    pub(crate) fn require(&self, n: usize) -> Result<()> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                format: self.format,
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        Ok(())
    }

    pub(crate) fn slice(&self, start: usize, end: usize) -> &'a [u8] {
        &self.bytes[start..end]
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn malformed(&self, offset: u64, reason: impl Into<String>) -> Error {
        Error::Malformed {
            format: self.format,
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.malformed(self.offset(), format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
