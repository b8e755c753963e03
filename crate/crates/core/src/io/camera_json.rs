//! Camera/trajectory JSON and match lists.
//!
//! ```json
//! {"intrinsics": {"fx": 100, "fy": 100, "cx": 63.5, "cy": 47.5, "width": 128, "height": 96},
//!  "frames": [{"index": 0, "R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0,0,0]}]}
//! ```
//!
//! Decoding walks the JSON tree by hand so every error names its field path
//! (`frames[3].R`, `intrinsics.fx`, `[2].tgt`).

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::Serialize;
use serde_json::{Map, Value};

use super::{read_bytes, write_bytes};
use crate::camera::{CameraTrajectory, Intrinsics, PoseSE3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntrinsicsEntry {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameEntry {
    pub index: usize,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl FrameEntry {
    pub fn from_pose(index: usize, pose: &PoseSE3) -> Self {
        let r = pose.rotation();
        let t = pose.translation();
        Self {
            index,
            r: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            t: [t.x, t.y, t.z],
        }
    }

    pub fn pose(&self) -> Result<PoseSE3> {
        pose_from_arrays(&self.r, &self.t, &format!("frames[{}]", self.index))
    }
}

/// Raw file contents: frames in file order, indices not yet checked for
/// contiguity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CameraFile {
    pub intrinsics: IntrinsicsEntry,
    pub frames: Vec<FrameEntry>,
}

impl CameraFile {
    pub fn from_trajectory(traj: &CameraTrajectory) -> Self {
        let k = &traj.intrinsics;
        Self {
            intrinsics: IntrinsicsEntry {
                fx: k.fx,
                fy: k.fy,
                cx: k.cx,
                cy: k.cy,
                width: k.width,
                height: k.height,
            },
            frames: traj.poses.iter().enumerate().map(|(i, p)| FrameEntry::from_pose(i, p)).collect(),
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let e = &self.intrinsics;
        Intrinsics {
            fx: e.fx,
            fy: e.fy,
            cx: e.cx,
            cy: e.cy,
            width: e.width,
            height: e.height,
        }
    }

    /// Sorts frames by index and requires indices `0..n`.
    pub fn to_trajectory(&self) -> Result<CameraTrajectory> {
        let k = self.intrinsics();
        k.validate()?;
        let mut frames: Vec<&FrameEntry> = self.frames.iter().collect();
        frames.sort_by_key(|f| f.index);
        for (i, f) in frames.iter().enumerate() {
            if f.index != i {
                return Err(Error::schema(
                    format!("frames[{i}].index"),
                    format!("indices must be contiguous from 0, found {}", f.index),
                ));
            }
        }
        let poses = frames.iter().map(|f| f.pose()).collect::<Result<Vec<_>>>()?;
        if poses.is_empty() {
            return Err(Error::schema("frames", "must contain at least one frame"));
        }
        CameraTrajectory::new(k, poses)
    }
}

fn pose_from_arrays(r: &[[f64; 3]; 3], t: &[f64; 3], path: &str) -> Result<PoseSE3> {
    let rot = Matrix3::from_fn(|i, j| r[i][j]);
    PoseSE3::new(rot, Vector3::from(*t)).map_err(|e| match e {
        Error::Invariant { field, invariant } => Error::Invariant {
            field: format!("{path}.{field}"),
            invariant,
        },
        other => other,
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(display(path), "expected an object"))
}

fn display(path: &str) -> &str {
    if path.is_empty() {
        "<root>"
    } else {
        path
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(join(path, key), "missing field"))
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::schema(path, "expected a number"))
}

fn count(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::schema(path, "expected a non-negative integer"))
}

fn array<'a>(v: &'a Value, path: &str, len: Option<usize>) -> Result<&'a Vec<Value>> {
    let a = v.as_array().ok_or_else(|| Error::schema(path, "expected an array"))?;
    if let Some(n) = len {
        if a.len() != n {
            return Err(Error::schema(path, format!("expected {n} elements, found {}", a.len())));
        }
    }
    Ok(a)
}

fn vec3(v: &Value, path: &str) -> Result<[f64; 3]> {
    let a = array(v, path, Some(3))?;
    let mut out = [0.0; 3];
    for (i, x) in a.iter().enumerate() {
        out[i] = number(x, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn mat3(v: &Value, path: &str) -> Result<[[f64; 3]; 3]> {
    let a = array(v, path, Some(3))?;
    let mut out = [[0.0; 3]; 3];
    for (i, row) in a.iter().enumerate() {
        out[i] = vec3(row, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn parse_intrinsics(v: &Value, path: &str) -> Result<IntrinsicsEntry> {
    let o = object(v, path)?;
    let f = |k: &str| number(field(o, k, path)?, &join(path, k));
    let n = |k: &str| count(field(o, k, path)?, &join(path, k));
    Ok(IntrinsicsEntry {
        fx: f("fx")?,
        fy: f("fy")?,
        cx: f("cx")?,
        cy: f("cy")?,
        width: n("width")?,
        height: n("height")?,
    })
}

/// Parses `{"R": [[..]], "t": [..]}` at `path` into a validated pose.
pub fn parse_pose_value(v: &Value, path: &str) -> Result<PoseSE3> {
    let o = object(v, path)?;
    let r = mat3(field(o, "R", path)?, &join(path, "R"))?;
    let t = vec3(field(o, "t", path)?, &join(path, "t"))?;
    pose_from_arrays(&r, &t, display(path))
}

/// Parses a `frames` array; each entry is validated as a pose.
pub fn parse_frames_value(v: &Value, path: &str) -> Result<Vec<FrameEntry>> {
    let a = array(v, path, None)?;
    let mut out = Vec::with_capacity(a.len());
    for (i, item) in a.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let o = object(item, &p)?;
        let index = count(field(o, "index", &p)?, &join(&p, "index"))?;
        let r = mat3(field(o, "R", &p)?, &join(&p, "R"))?;
        let t = vec3(field(o, "t", &p)?, &join(&p, "t"))?;
        pose_from_arrays(&r, &t, &p)?;
        out.push(FrameEntry { index, r, t });
    }
    Ok(out)
}

pub fn parse_json(bytes: &[u8], format: &'static str) -> Result<Value> {
    serde_json::from_slice(bytes).map_err(|e| Error::Malformed {
        format,
        offset: line_col_offset(bytes, e.line(), e.column()),
        reason: e.to_string(),
    })
}

fn line_col_offset(bytes: &[u8], line: usize, column: usize) -> u64 {
    if line == 0 {
        return 0;
    }
    let mut cur = 1;
    for (i, &b) in bytes.iter().enumerate() {
        if cur == line {
            return (i + column.saturating_sub(1)) as u64;
        }
        if b == b'\n' {
            cur += 1;
        }
    }
    bytes.len() as u64
}

pub fn decode_camera_json(bytes: &[u8]) -> Result<CameraFile> {
    let root = parse_json(bytes, "camera json")?;
    let o = object(&root, "")?;
    let intrinsics = parse_intrinsics(field(o, "intrinsics", "")?, "intrinsics")?;
    let frames = parse_frames_value(field(o, "frames", "")?, "frames")?;
    let file = CameraFile { intrinsics, frames };
    file.intrinsics().validate()?;
    Ok(file)
}

pub fn encode_camera_json(file: &CameraFile) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(file).expect("camera file serializes");
    out.push(b'\n');
    out
}

pub fn read_camera_json(path: &Path) -> Result<CameraFile> {
    decode_camera_json(&read_bytes(path)?)
}

pub fn write_camera_json(path: &Path, file: &CameraFile) -> Result<()> {
    write_bytes(path, &encode_camera_json(file))
}

fn vec2(v: &Value, path: &str) -> Result<Vector2<f64>> {
    let a = array(v, path, Some(2))?;
    Ok(Vector2::new(
        number(&a[0], &format!("{path}[0]"))?,
        number(&a[1], &format!("{path}[1]"))?,
    ))
}

/// `[{"src": [u, v], "tgt": [u, v]}, ...]`
pub fn decode_matches(bytes: &[u8]) -> Result<Vec<(Vector2<f64>, Vector2<f64>)>> {
    let root = parse_json(bytes, "matches json")?;
    let a = array(&root, "<root>", None)?;
    a.iter()
        .enumerate()
        .map(|(i, m)| {
            let p = format!("[{i}]");
            let o = object(m, &p)?;
            Ok((
                vec2(field(o, "src", &p)?, &format!("{p}.src"))?,
                vec2(field(o, "tgt", &p)?, &format!("{p}.tgt"))?,
            ))
        })
        .collect()
}

pub fn encode_matches(matches: &[(Vector2<f64>, Vector2<f64>)]) -> Vec<u8> {
    let v: Vec<Value> = matches
        .iter()
        .map(|(s, t)| serde_json::json!({"src": [s.x, s.y], "tgt": [t.x, t.y]}))
        .collect();
    serde_json::to_vec(&v).expect("matches serialize")
}

pub fn read_matches(path: &Path) -> Result<Vec<(Vector2<f64>, Vector2<f64>)>> {
    decode_matches(&read_bytes(path)?)
}
