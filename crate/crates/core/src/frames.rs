use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};
use crate::raster::Raster;

/// Per-pixel probability that the content is moving.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionProbMap(Raster<f64>);

impl MotionProbMap {
    pub fn new(values: Raster<f64>) -> Result<Self> {
        if let Some(p) = values.as_slice().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter {
                name: "motion_prob",
                reason: format!("probability {p} outside [0, 1]"),
            });
        }
        Ok(Self(values))
    }

    pub fn constant(width: usize, height: usize, p: f64) -> Result<Self> {
        Self::new(Raster::filled(width, height, p))
    }

    pub fn raster(&self) -> &Raster<f64> {
        &self.0
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        *self.0.get(u, v)
    }
}

/// Depth, pose, intrinsics and optional motion map for one video frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    depth: DepthMap,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    motion: Option<MotionProbMap>,
}

impl Frame {
    pub fn new(
        depth: DepthMap,
        pose: CameraPose,
        intrinsics: CameraIntrinsics,
        motion: Option<MotionProbMap>,
    ) -> Result<Self> {
        intrinsics.validate()?;
        depth.check_dims(&intrinsics)?;
        if let Some(m) = &motion {
            if m.raster().width() != intrinsics.width || m.raster().height() != intrinsics.height {
                return Err(Error::DimensionMismatch {
                    context: "motion map vs intrinsics",
                    expected_width: intrinsics.width,
                    expected_height: intrinsics.height,
                    width: m.raster().width(),
                    height: m.raster().height(),
                });
            }
        }
        Ok(Self {
            depth,
            pose,
            intrinsics,
            motion,
        })
    }

    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn motion(&self) -> Option<&MotionProbMap> {
        self.motion.as_ref()
    }

    /// Motion probability at a pixel; 0 when no map is attached.
    #[inline]
    pub fn motion_prob(&self, u: usize, v: usize) -> f64 {
        self.motion.as_ref().map_or(0.0, |m| m.get(u, v))
    }

    /// Valid and not classified dynamic at `threshold`.
    #[inline]
    pub fn is_static_valid(&self, u: usize, v: usize, threshold: f64) -> bool {
        self.depth.is_valid(u, v) && self.motion_prob(u, v) <= threshold
    }

    pub fn with_depth(&self, depth: DepthMap) -> Result<Self> {
        Self::new(depth, self.pose, self.intrinsics, self.motion.clone())
    }

    pub fn with_pose(&self, pose: CameraPose) -> Self {
        Self { pose, ..self.clone() }
    }

    pub fn with_motion(&self, motion: Option<MotionProbMap>) -> Result<Self> {
        Self::new(self.depth.clone(), self.pose, self.intrinsics, motion)
    }
}

/// Temporally ordered, non-empty sequence of frames sharing one world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    frames: Vec<Frame>,
}

impl FrameSet {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("frame set has no frames"));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn get(&self, i: usize) -> Option<&Frame> {
        self.frames.get(i)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Frame> {
        self.frames.iter()
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// Frames in reverse temporal order.
    pub fn reversed(&self) -> FrameSet {
        let mut frames = self.frames.clone();
        frames.reverse();
        FrameSet { frames }
    }

    /// Left-multiplies every pose by `g` (a change of world frame).
    pub fn transformed(&self, g: &CameraPose) -> FrameSet {
        FrameSet {
            frames: self.frames.iter().map(|f| f.with_pose(g.compose(f.pose()))).collect(),
        }
    }

    pub fn total_valid_pixels(&self) -> usize {
        self.frames.iter().map(|f| f.depth().valid_count()).sum()
    }
}

impl<'a> IntoIterator for &'a FrameSet {
    type Item = &'a Frame;
    type IntoIter = core::slice::Iter<'a, Frame>;
    fn into_iter(self) -> Self::IntoIter {
        self.frames.iter()
    }
}
