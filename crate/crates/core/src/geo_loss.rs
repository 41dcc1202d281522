//! Depth reprojection consistency loss.
//!
//! The fused cloud is projected into every frame, points landing on the same
//! pixel are averaged, and the result `D̂ᵢ` is compared with the frame's own
//! depth `Dᵢ`:
//!
//! ```text
//! L = 1/T Σᵢ 1/|Vᵢ| Σ_{u ∈ Vᵢ} 1(|D̂ᵢ(u) − Dᵢ(u)| < δ) · |D̂ᵢ(u) − Dᵢ(u)|
//! ```
//!
//! `Vᵢ` holds the pixels that have a valid depth, received at least one cloud
//! point, and are not classified dynamic. `D̂` is treated as a constant target
//! when differentiating, so gradients flow only through `Dᵢ`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::exec::{Executor, Sequential};
use crate::frames::{Frame, FrameSet};
use crate::fusion::{backproject_frame, PointCloud};
use crate::geometry::{project, CameraIntrinsics, CameraPose, Projection};
use crate::math::Point3;
use crate::raster::Raster;

/// How several points landing on one pixel are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplatMode {
    /// Arithmetic mean of their depths.
    #[default]
    Average,
    /// Smallest depth (front-most surface).
    NearestDepth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoLossConfig {
    /// Residual cutoff in depth units; residuals `>= delta` are ignored.
    pub delta: f64,
    /// Pixels with motion probability above this are dynamic.
    pub dynamic_threshold: f64,
    /// Maximum probability difference for dynamic alignment candidates.
    pub prob_similarity: f64,
    /// Frames on each side searched for dynamic alignment candidates.
    pub neighbor_radius: usize,
    pub splat: SplatMode,
}

impl Default for GeoLossConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            dynamic_threshold: 0.5,
            prob_similarity: 0.1,
            neighbor_radius: 1,
            splat: SplatMode::Average,
        }
    }
}

impl GeoLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.dynamic_threshold) {
            return Err(invalid(
                "dynamic_threshold",
                format!("must lie in [0, 1], got {}", self.dynamic_threshold),
            ));
        }
        if !(0.0..=1.0).contains(&self.prob_similarity) {
            return Err(invalid(
                "prob_similarity",
                format!("must lie in [0, 1], got {}", self.prob_similarity),
            ));
        }
        Ok(())
    }
}

/// Cloud depth as seen from one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprojectedDepth {
    values: Raster<f64>,
    hit_count: Raster<u32>,
}

impl ReprojectedDepth {
    fn empty(width: usize, height: usize) -> Self {
        Self {
            values: Raster::filled(width, height, f64::NAN),
            hit_count: Raster::filled(width, height, 0),
        }
    }

    /// Depth at `(u, v)` if at least one point landed there.
    #[inline]
    pub fn value(&self, u: usize, v: usize) -> Option<f64> {
        self.is_hit(u, v).then(|| *self.values.get(u, v))
    }

    #[inline]
    pub fn is_hit(&self, u: usize, v: usize) -> bool {
        *self.hit_count.get(u, v) > 0
    }

    #[inline]
    pub fn hit_count(&self, u: usize, v: usize) -> u32 {
        *self.hit_count.get(u, v)
    }

    /// Raw values; `NaN` where nothing landed.
    pub fn values(&self) -> &Raster<f64> {
        &self.values
    }

    pub fn hits(&self) -> usize {
        self.hit_count.as_slice().iter().filter(|c| **c > 0).count()
    }
}

/// Accumulates camera-frame depths per pixel.
struct Splatter<'a> {
    k: &'a CameraIntrinsics,
    pose: &'a CameraPose,
    mode: SplatMode,
    acc: ReprojectedDepth,
}

impl<'a> Splatter<'a> {
    fn new(k: &'a CameraIntrinsics, pose: &'a CameraPose, mode: SplatMode) -> Self {
        Self {
            k,
            pose,
            mode,
            acc: ReprojectedDepth::empty(k.width, k.height),
        }
    }

    /// Pixel hit by `p`, if it is in front of the camera and inside the image.
    #[inline]
    fn locate(&self, p: Point3) -> Option<(usize, usize, f64)> {
        match project(p, self.k, self.pose) {
            Projection::InFront { u, v, z } => {
                let px = self.k.nearest_pixel(u, v)?;
                Some((px.u as usize, px.v as usize, z))
            }
            Projection::Behind { .. } => None,
        }
    }

    #[inline]
    fn add(&mut self, u: usize, v: usize, z: f64) {
        let n = self.acc.hit_count.get_mut(u, v);
        let value = self.acc.values.get_mut(u, v);
        if *n == 0 {
            *value = z;
        } else {
            match self.mode {
                SplatMode::Average => *value += z,
                SplatMode::NearestDepth => *value = value.min(z),
            }
        }
        *n += 1;
    }

    fn finish(mut self) -> ReprojectedDepth {
        if self.mode == SplatMode::Average {
            for (value, n) in self
                .acc
                .values
                .as_mut_slice()
                .iter_mut()
                .zip(self.acc.hit_count.as_slice())
            {
                if *n > 1 {
                    *value /= *n as f64;
                }
            }
        }
        self.acc
    }
}

/// Projects every cloud point into the camera and averages per pixel.
pub fn reproject_cloud(cloud: &PointCloud, k: &CameraIntrinsics, pose: &CameraPose) -> ReprojectedDepth {
    reproject_cloud_with_mode(cloud, k, pose, SplatMode::Average)
}

pub fn reproject_cloud_with_mode(
    cloud: &PointCloud,
    k: &CameraIntrinsics,
    pose: &CameraPose,
    mode: SplatMode,
) -> ReprojectedDepth {
    let mut s = Splatter::new(k, pose, mode);
    for p in cloud.points() {
        if let Some((u, v, z)) = s.locate(*p) {
            s.add(u, v, z);
        }
    }
    s.finish()
}

/// Per-frame loss term and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLoss {
    /// `1/|Vᵢ| Σ 1(|r| < δ)|r|`, or 0 when `Vᵢ` is empty.
    pub loss: f64,
    pub valid_pixels: usize,
    pub static_pixels: usize,
    /// `|Vᵢ|`: static valid pixels that received at least one cloud point.
    pub considered_pixels: usize,
    /// Pixels of `Vᵢ` whose residual reached `δ`.
    pub clipped_pixels: usize,
}

impl FrameLoss {
    /// `Vᵢ` is empty; the frame contributes 0.
    pub fn is_empty(&self) -> bool {
        self.considered_pixels == 0
    }

    /// Fraction of static valid pixels hit by the cloud.
    pub fn hit_rate(&self) -> Option<f64> {
        (self.static_pixels > 0).then(|| self.considered_pixels as f64 / self.static_pixels as f64)
    }

    pub fn clipped_fraction(&self) -> Option<f64> {
        (self.considered_pixels > 0).then(|| self.clipped_pixels as f64 / self.considered_pixels as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoLoss {
    pub loss: f64,
    pub per_frame: Vec<FrameLoss>,
}

impl GeoLoss {
    /// Indices of frames whose `Vᵢ` was empty.
    pub fn empty_frames(&self) -> Vec<usize> {
        self.per_frame
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}

fn frame_terms(
    frame: &Frame,
    target: &ReprojectedDepth,
    cfg: &GeoLossConfig,
    mut on_term: impl FnMut(usize, f64),
) -> FrameLoss {
    let depth = frame.depth();
    let mut out = FrameLoss {
        loss: 0.0,
        valid_pixels: 0,
        static_pixels: 0,
        considered_pixels: 0,
        clipped_pixels: 0,
    };
    let mut sum = 0.0;
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let Some(d) = depth.depth(u, v) else { continue };
            out.valid_pixels += 1;
            if frame.motion_prob(u, v) > cfg.dynamic_threshold {
                continue;
            }
            out.static_pixels += 1;
            let Some(d_hat) = target.value(u, v) else { continue };
            out.considered_pixels += 1;
            let r = d_hat - d;
            if libm::fabs(r) < cfg.delta {
                sum += libm::fabs(r);
                on_term(depth.values().index(u, v), r);
            } else {
                out.clipped_pixels += 1;
            }
        }
    }
    if out.considered_pixels > 0 {
        out.loss = sum / out.considered_pixels as f64;
    }
    out
}

/// Loss term of frame `i` against a fixed cloud.
pub fn frame_geo_loss(frames: &FrameSet, i: usize, cloud: &PointCloud, cfg: &GeoLossConfig) -> FrameLoss {
    let f = &frames.frames()[i];
    let target = reproject_cloud_with_mode(cloud, f.intrinsics(), f.pose(), cfg.splat);
    frame_terms(f, &target, cfg, |_, _| {})
}

pub fn geo_loss(frames: &FrameSet, cloud: &PointCloud, cfg: &GeoLossConfig) -> Result<GeoLoss> {
    geo_loss_with(&Sequential, frames, cloud, cfg)
}

/// Frame terms are computed independently and reduced in frame order.
pub fn geo_loss_with<E: Executor>(
    exec: &E,
    frames: &FrameSet,
    cloud: &PointCloud,
    cfg: &GeoLossConfig,
) -> Result<GeoLoss> {
    cfg.validate()?;
    let per_frame = exec.map_indexed(frames.len(), |i| frame_geo_loss(frames, i, cloud, cfg));
    Ok(GeoLoss {
        loss: mean_in_order(per_frame.iter().map(|f| f.loss), frames.len()),
        per_frame,
    })
}

fn mean_in_order(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut total = 0.0;
    for v in values {
        total += v;
    }
    total / n as f64
}

pub fn geo_loss_grad(frames: &FrameSet, cloud: &PointCloud, cfg: &GeoLossConfig) -> Result<Vec<Raster<f64>>> {
    geo_loss_grad_with(&Sequential, frames, cloud, cfg)
}

/// `∂L/∂Dᵢ(u) = −sign(D̂ᵢ(u) − Dᵢ(u)) · 1(|r| < δ) / (T · |Vᵢ|)` on `Vᵢ`, zero
/// elsewhere, with `sign(0) = 0`.
pub fn geo_loss_grad_with<E: Executor>(
    exec: &E,
    frames: &FrameSet,
    cloud: &PointCloud,
    cfg: &GeoLossConfig,
) -> Result<Vec<Raster<f64>>> {
    cfg.validate()?;
    let t = frames.len() as f64;
    Ok(exec.map_indexed(frames.len(), |i| {
        let f = &frames.frames()[i];
        let target = reproject_cloud_with_mode(cloud, f.intrinsics(), f.pose(), cfg.splat);
        let mut signs = Vec::new();
        let stats = frame_terms(f, &target, cfg, |idx, r| signs.push((idx, r)));
        let mut grad = Raster::filled(f.depth().width(), f.depth().height(), 0.0);
        if stats.considered_pixels > 0 {
            let scale = 1.0 / (t * stats.considered_pixels as f64);
            for (idx, r) in signs {
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                grad.as_mut_slice()[idx] = -sign * scale;
            }
        }
        grad
    }))
}

/// Disjoint split of a frame's valid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionPartition {
    pub static_pixels: Raster<bool>,
    pub dynamic_pixels: Raster<bool>,
}

impl MotionPartition {
    pub fn static_count(&self) -> usize {
        self.static_pixels.as_slice().iter().filter(|b| **b).count()
    }

    pub fn dynamic_count(&self) -> usize {
        self.dynamic_pixels.as_slice().iter().filter(|b| **b).count()
    }
}

/// A valid pixel is dynamic iff its motion probability exceeds the threshold.
/// Frames without a motion map are entirely static.
pub fn partition_by_motion(frames: &FrameSet, cfg: &GeoLossConfig) -> Vec<MotionPartition> {
    frames
        .iter()
        .map(|f| {
            let d = f.depth();
            let dynamic = |u, v| f.motion_prob(u, v) > cfg.dynamic_threshold;
            MotionPartition {
                static_pixels: Raster::from_fn(d.width(), d.height(), |u, v| d.is_valid(u, v) && !dynamic(u, v)),
                dynamic_pixels: Raster::from_fn(d.width(), d.height(), |u, v| d.is_valid(u, v) && dynamic(u, v)),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicFrameLoss {
    pub loss: f64,
    pub dynamic_pixels: usize,
    /// Dynamic pixels with a non-empty candidate set.
    pub matched_pixels: usize,
    pub clipped_pixels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicLoss {
    pub loss: f64,
    pub per_frame: Vec<DynamicFrameLoss>,
}

pub fn dynamic_alignment_loss(frames: &FrameSet, cfg: &GeoLossConfig) -> Result<DynamicLoss> {
    dynamic_alignment_loss_with(&Sequential, frames, cfg)
}

/// Aligns dynamic pixels with points of similar motion probability from the
/// `neighbor_radius` frames on either side.
///
/// Candidates for pixel `u` of frame `i` are backprojected valid pixels of the
/// neighboring frames that land on `u` and whose motion probability differs
/// from frame `i`'s by less than `prob_similarity`. Candidates are averaged
/// and compared with the same thresholded residual as the static term. Pixels
/// without candidates contribute nothing and are not counted.
pub fn dynamic_alignment_loss_with<E: Executor>(
    exec: &E,
    frames: &FrameSet,
    cfg: &GeoLossConfig,
) -> Result<DynamicLoss> {
    cfg.validate()?;
    let t = frames.len();
    let per_frame = exec.map_indexed(t, |i| {
        let f = &frames.frames()[i];
        let is_dynamic = |u: usize, v: usize| f.depth().is_valid(u, v) && f.motion_prob(u, v) > cfg.dynamic_threshold;
        let depth = f.depth();
        let dynamic_pixels = (0..depth.height())
            .flat_map(|v| (0..depth.width()).map(move |u| (u, v)))
            .filter(|&(u, v)| is_dynamic(u, v))
            .count();
        let mut out = DynamicFrameLoss {
            loss: 0.0,
            dynamic_pixels,
            matched_pixels: 0,
            clipped_pixels: 0,
        };
        if dynamic_pixels == 0 {
            return out;
        }
        let mut s = Splatter::new(f.intrinsics(), f.pose(), cfg.splat);
        let lo = i.saturating_sub(cfg.neighbor_radius);
        let hi = (i + cfg.neighbor_radius).min(t - 1);
        for j in (lo..=hi).filter(|j| *j != i) {
            let cands = backproject_frame(j, &frames.frames()[j], |_, _| true);
            for (p, prob) in cands.points().iter().zip(cands.motion_prob()) {
                let Some((u, v, z)) = s.locate(*p) else { continue };
                if is_dynamic(u, v) && libm::fabs(prob - f.motion_prob(u, v)) < cfg.prob_similarity {
                    s.add(u, v, z);
                }
            }
        }
        let target = s.finish();
        let mut sum = 0.0;
        for v in 0..depth.height() {
            for u in 0..depth.width() {
                if !is_dynamic(u, v) {
                    continue;
                }
                let (Some(d_hat), Some(d)) = (target.value(u, v), depth.depth(u, v)) else {
                    continue;
                };
                out.matched_pixels += 1;
                let r = libm::fabs(d_hat - d);
                if r < cfg.delta {
                    sum += r;
                } else {
                    out.clipped_pixels += 1;
                }
            }
        }
        if out.matched_pixels > 0 {
            out.loss = sum / out.matched_pixels as f64;
        }
        out
    });
    Ok(DynamicLoss {
        loss: mean_in_order(per_frame.iter().map(|f| f.loss), t),
        per_frame,
    })
}
