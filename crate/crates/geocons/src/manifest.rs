//! JSON manifests describing a frame set stored as DFR rasters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use geocons_core::{CameraIntrinsics, CameraPose, Frame, FrameSet, MotionProbMap};

use crate::dfr::DepthRaster;
use crate::error::IoError;

pub const VERSION: u32 = 1;
/// Orthonormality tolerance applied to manifest poses.
pub const POSE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub depth_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_prob_path: Option<String>,
    /// Row-major 4×4 camera-to-world matrix.
    pub pose: Vec<f64>,
    pub intrinsics: IntrinsicsEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsEntry {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&CameraIntrinsics> for IntrinsicsEntry {
    fn from(k: &CameraIntrinsics) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

/// A manifest loaded from disk together with digests of everything read.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub frames: FrameSet,
    pub scene_scale: Option<f64>,
    /// `(path as written in the manifest, sha256 hex)`; the manifest itself
    /// comes first.
    pub digests: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

fn read_raster(base: &Path, rel: &str, frame: usize, k: &IntrinsicsEntry) -> Result<(DepthRaster, String), IoError> {
    let path = base.join(rel);
    let bytes = read_file(&path)?;
    let raster = DepthRaster::from_bytes(&bytes, &path)?;
    if raster.width as usize != k.width || raster.height as usize != k.height {
        return Err(IoError::Dimension {
            frame,
            path,
            width: raster.width as usize,
            height: raster.height as usize,
            expected_width: k.width,
            expected_height: k.height,
        });
    }
    Ok((raster, sha256_hex(&bytes)))
}

/// Reads and fully validates a manifest. Raster paths are relative to the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<LoadedManifest, IoError> {
    let bytes = read_file(path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| IoError::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    if manifest.version != VERSION {
        return Err(IoError::Version(manifest.version));
    }
    if manifest.frames.is_empty() {
        return Err(IoError::Empty);
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut digests = vec![(path.display().to_string(), sha256_hex(&bytes))];
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (i, entry) in manifest.frames.iter().enumerate() {
        let m: [f64; 16] = entry.pose.as_slice().try_into().map_err(|_| IoError::Pose {
            frame: i,
            message: format!("expected 16 numbers, got {}", entry.pose.len()),
        })?;
        let pose = CameraPose::from_matrix4(&m, POSE_TOLERANCE).map_err(|e| IoError::Pose {
            frame: i,
            message: e.to_string(),
        })?;
        let e = entry.intrinsics;
        let k = CameraIntrinsics::new(e.fx, e.fy, e.cx, e.cy, e.width, e.height).map_err(|err| IoError::Frame {
            frame: i,
            message: err.to_string(),
        })?;
        let (depth, digest) = read_raster(base, &entry.depth_path, i, &e)?;
        digests.push((entry.depth_path.clone(), digest));
        let motion = match &entry.motion_prob_path {
            Some(rel) => {
                let (m, digest) = read_raster(base, rel, i, &e)?;
                digests.push((rel.clone(), digest));
                let map = MotionProbMap::new(m.to_raster()).map_err(|err| IoError::Frame {
                    frame: i,
                    message: format!("{rel}: {err}"),
                })?;
                Some(map)
            }
            None => None,
        };
        let frame = Frame::new(depth.to_depth(), pose, k, motion).map_err(|err| IoError::Frame {
            frame: i,
            message: err.to_string(),
        })?;
        frames.push(frame);
    }
    let frames = FrameSet::new(frames).map_err(|_| IoError::Empty)?;
    Ok(LoadedManifest {
        frames,
        scene_scale: manifest.scene_scale,
        digests,
    })
}

/// Writes `manifest.json` plus `depth_NNNN.dfr` (and `motion_NNNN.dfr` where
/// present) into `dir`, creating it if needed. Returns the manifest path.
pub fn write_manifest(dir: &Path, frames: &FrameSet, scene_scale: Option<f64>) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let depth_path = format!("depth_{i:04}.dfr");
        DepthRaster::from_depth(f.depth()).write(&dir.join(&depth_path))?;
        let motion_prob_path = match f.motion() {
            Some(m) => {
                let p = format!("motion_{i:04}.dfr");
                DepthRaster::from_raster(m.raster()).write(&dir.join(&p))?;
                Some(p)
            }
            None => None,
        };
        entries.push(FrameEntry {
            depth_path,
            motion_prob_path,
            pose: f.pose().to_matrix4().to_vec(),
            intrinsics: f.intrinsics().into(),
        });
    }
    let manifest = Manifest {
        version: VERSION,
        frames: entries,
        scene_scale,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
    Ok(path)
}
