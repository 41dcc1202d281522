//! Pinhole projection, backprojection and rigid camera poses.
//!
//! Conventions used throughout the crate:
//!
//! * Camera frame: `x` right, `y` down, `z` along the optical axis.
//! * Integer pixel index `(u, v)` is the *center* of that pixel.
//! * Depth is z-depth (distance along the optical axis), not ray length.
//! * [`CameraPose`] maps camera-frame points to world-frame points.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{Mat3, Point3, Vec3};
use crate::raster::Raster;

/// Tolerance for `RᵀR = I` and `det R = 1` on constructed poses.
pub const POSE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size must be at least 1x1 (got {}x{})",
                self.width, self.height
            )));
        }
        let cx_ok = self.cx >= 0.0 && self.cx < self.width as f64;
        let cy_ok = self.cy >= 0.0 && self.cy < self.height as f64;
        if !(cx_ok && cy_ok) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Square pixels with the principal point at the image center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    /// Camera-frame point for pixel center `(u, v)` at z-depth `depth`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Camera-frame ray direction with unit z component, so the ray parameter
    /// equals z-depth.
    #[inline]
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Nearest pixel to a continuous coordinate, if it lies inside the image.
    #[inline]
    pub fn nearest_pixel(&self, u: f64, v: f64) -> Option<PixelIndex> {
        let ru = crate::math::round_ties_even(u);
        let rv = crate::math::round_ties_even(v);
        if ru >= 0.0 && rv >= 0.0 && ru < self.width as f64 && rv < self.height as f64 {
            Some(PixelIndex {
                u: ru as u32,
                v: rv as u32,
            })
        } else {
            None
        }
    }
}

/// Rigid camera-to-world transform: `x_world = R · x_cam + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
}

impl CameraPose {
    pub const IDENTITY: CameraPose = CameraPose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        Self::with_tolerance(rotation, translation, POSE_TOLERANCE)
    }

    /// Like [`CameraPose::new`] but with a caller-chosen rotation tolerance.
    pub fn with_tolerance(rotation: Mat3, translation: Vec3, tolerance: f64) -> Result<Self> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let ortho = rotation.orthonormality_error();
        if ortho > tolerance {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > tolerance {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Mat3::IDENTITY,
            translation: t,
        }
    }

    /// Builds a pose from a row-major 4x4 camera-to-world matrix.
    pub fn from_matrix4(m: &[f64; 16], tolerance: f64) -> Result<Self> {
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidPose(format!(
                "bottom row must be [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        let rotation = Mat3::from_rows([[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]]);
        Self::with_tolerance(rotation, Vec3::new(m[3], m[7], m[11]), tolerance)
    }

    pub fn to_matrix4(&self) -> [f64; 16] {
        let r = &self.rotation.rows;
        let t = self.translation;
        [
            r[0][0], r[0][1], r[0][2], t.x, //
            r[1][0], r[1][1], r[1][2], t.y, //
            r[2][0], r[2][1], r[2][2], t.z, //
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Camera looking from `eye` towards `target`, `y` axis pointing along `down`
    /// as far as orthogonality allows.
    pub fn look_at(eye: Vec3, target: Vec3, down: Vec3) -> Result<Self> {
        let forward = (target - eye)
            .normalized()
            .ok_or_else(|| Error::InvalidPose("eye and target coincide".into()))?;
        let right = down
            .cross(forward)
            .normalized()
            .ok_or_else(|| Error::InvalidPose("down vector parallel to viewing direction".into()))?;
        let down = forward.cross(right);
        Self::new(Mat3::from_cols(right, down, forward), eye)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Camera frame to world frame.
    #[inline]
    pub fn transform(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    /// World frame to camera frame, `Rᵀ (p - t)`.
    #[inline]
    pub fn inverse_transform(&self, p: Vec3) -> Vec3 {
        let d = p - self.translation;
        let r = &self.rotation.rows;
        Vec3::new(
            r[0][0] * d.x + r[1][0] * d.y + r[2][0] * d.z,
            r[0][1] * d.x + r[1][1] * d.y + r[2][1] * d.z,
            r[0][2] * d.x + r[1][2] * d.y + r[2][2] * d.z,
        )
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.transform(other.translation),
        }
    }

    /// Largest absolute difference between the 3x4 blocks of two poses.
    pub fn max_abs_diff(&self, other: &CameraPose) -> f64 {
        let a = self.to_matrix4();
        let b = other.to_matrix4();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| libm::fabs(x - y))
            .fold(0.0, f64::max)
    }
}

/// `(R, t)⁻¹ = (Rᵀ, -Rᵀt)`.
pub fn pose_inverse(pose: &CameraPose) -> CameraPose {
    pose.inverse()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelIndex {
    pub u: u32,
    pub v: u32,
}

impl PixelIndex {
    pub fn new(u: u32, v: u32) -> Self {
        Self { u, v }
    }
}

/// Dense z-depth raster plus validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Raster<f64>,
    valid: Raster<bool>,
}

impl DepthMap {
    /// Every finite, strictly positive value is valid; everything else is not.
    pub fn from_values(values: Raster<f64>) -> Self {
        let valid = values.map(|d| d.is_finite() && *d > 0.0);
        Self { values, valid }
    }

    /// Explicit mask. Entries flagged valid must be finite and positive.
    pub fn from_parts(values: Raster<f64>, valid: Raster<bool>) -> Result<Self> {
        if !values.same_shape(&valid) {
            return Err(Error::DimensionMismatch {
                context: "depth mask",
                expected_width: values.width(),
                expected_height: values.height(),
                width: valid.width(),
                height: valid.height(),
            });
        }
        let bad = values
            .as_slice()
            .iter()
            .zip(valid.as_slice())
            .position(|(d, ok)| *ok && !(d.is_finite() && *d > 0.0));
        if let Some(i) = bad {
            return Err(invalid_depth(i, values.as_slice()[i], values.width()));
        }
        Ok(Self { values, valid })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self::from_values(Raster::filled(width, height, depth))
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn values(&self) -> &Raster<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Raster<bool> {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        *self.valid.get(u, v)
    }

    /// Depth at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn depth(&self, u: usize, v: usize) -> Option<f64> {
        if self.is_valid(u, v) {
            Some(*self.values.get(u, v))
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|b| **b).count()
    }

    /// Applies `f` to every valid depth; the mask is kept as is.
    ///
    /// `f` must return finite positive values.
    pub fn map_valid(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        let mut values = self.values.clone();
        for (i, (d, ok)) in values
            .as_mut_slice()
            .iter_mut()
            .zip(self.valid.as_slice())
            .enumerate()
        {
            if *ok {
                *d = f(i, *d);
            }
        }
        Self::from_parts(values, self.valid.clone())
    }

    pub(crate) fn check_dims(&self, k: &CameraIntrinsics) -> Result<()> {
        if self.width() != k.width || self.height() != k.height {
            return Err(Error::DimensionMismatch {
                context: "depth map vs intrinsics",
                expected_width: k.width,
                expected_height: k.height,
                width: self.width(),
                height: self.height(),
            });
        }
        Ok(())
    }
}

fn invalid_depth(index: usize, value: f64, width: usize) -> Error {
    Error::InvalidParameter {
        name: "depth",
        reason: format!(
            "pixel ({}, {}) flagged valid but holds {value}",
            index % width.max(1),
            index / width.max(1)
        ),
    }
}

/// World point for a single pixel.
#[inline]
pub fn backproject_pixel(
    u: usize,
    v: usize,
    depth: f64,
    k: &CameraIntrinsics,
    pose: &CameraPose,
) -> Point3 {
    pose.transform(k.unproject(u as f64, v as f64, depth))
}

/// One world point per valid pixel, in row-major pixel order.
pub fn backproject(
    depth: &DepthMap,
    k: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<Vec<(Point3, PixelIndex)>> {
    depth.check_dims(k)?;
    let mut out = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if let Some(d) = depth.depth(u, v) {
                out.push((
                    backproject_pixel(u, v, d, k, pose),
                    PixelIndex::new(u as u32, v as u32),
                ));
            }
        }
    }
    Ok(out)
}

/// Result of projecting a world point into a camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates and camera-frame depth.
    InFront { u: f64, v: f64, z: f64 },
    /// Camera-frame depth `z <= 0`; no division was performed.
    Behind { z: f64 },
}

impl Projection {
    pub fn in_front(self) -> Option<(f64, f64, f64)> {
        match self {
            Projection::InFront { u, v, z } => Some((u, v, z)),
            Projection::Behind { .. } => None,
        }
    }
}

#[inline]
pub fn project_camera_point(p: Vec3, k: &CameraIntrinsics) -> Projection {
    if p.z <= 0.0 {
        return Projection::Behind { z: p.z };
    }
    Projection::InFront {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
        z: p.z,
    }
}

/// Projects a world point through `pose⁻¹` and the pinhole model.
#[inline]
pub fn project(point: Point3, k: &CameraIntrinsics, pose: &CameraPose) -> Projection {
    project_camera_point(pose.inverse_transform(point), k)
}
