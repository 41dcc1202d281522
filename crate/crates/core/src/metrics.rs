//! Multi-view consistency score and reprojection error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::frames::FrameSet;
use crate::fusion::{build_global_cloud_with, FusionConfig, VoxelSize};
use crate::geometry::{backproject_pixel, project};
use crate::knn::SpatialGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsConfig {
    /// A warp is consistent when `|z_w − D_j| / D_j` is below this.
    pub mvcs_rel_tol: f64,
    /// Target frame offsets `j − i`; must be non-empty and exclude 0.
    pub neighbor_offsets: Vec<i64>,
    /// Voxel size for the reprojection-error cloud; `None` keeps the fusion
    /// config's choice.
    pub reproj_voxel: Option<VoxelSize>,
    /// Pixels with motion probability above this are left out of both metrics.
    pub dynamic_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            mvcs_rel_tol: 0.05,
            neighbor_offsets: vec![-1, 1],
            reproj_voxel: None,
            dynamic_threshold: 0.5,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mvcs_rel_tol > 0.0 && self.mvcs_rel_tol.is_finite()) {
            return Err(invalid("mvcs_rel_tol", format!("must be positive, got {}", self.mvcs_rel_tol)));
        }
        if self.neighbor_offsets.is_empty() {
            return Err(invalid("neighbor_offsets", "must not be empty"));
        }
        if self.neighbor_offsets.contains(&0) {
            return Err(invalid("neighbor_offsets", "must not contain 0"));
        }
        if !(0.0..=1.0).contains(&self.dynamic_threshold) {
            return Err(invalid("dynamic_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub source: usize,
    pub target: usize,
    pub consistent: u64,
    pub in_bounds: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mvcs {
    /// `100 · consistent / in_bounds` over all pairs.
    pub score: f64,
    pub consistent: u64,
    pub in_bounds: u64,
    pub pairs: Vec<PairCounts>,
}

pub fn mvcs(frames: &FrameSet, cfg: &MetricsConfig) -> Result<Mvcs> {
    mvcs_with(&Sequential, frames, cfg)
}

/// Warps every valid static pixel of frame `i` into each neighbor `j` and
/// checks it against `D_j` sampled at the nearest pixel.
///
/// Warps that fall behind camera `j`, outside its image, or onto an invalid
/// pixel of `D_j` are not counted. There is no occlusion handling: a warp
/// hidden behind nearer geometry in `j` counts as inconsistent.
pub fn mvcs_with<E: Executor>(exec: &E, frames: &FrameSet, cfg: &MetricsConfig) -> Result<Mvcs> {
    cfg.validate()?;
    let t = frames.len();
    if t < 2 {
        return Err(invalid("frames", format!("MVCS needs at least 2 frames, got {t}")));
    }
    let mut pair_list = Vec::new();
    for i in 0..t {
        for &off in &cfg.neighbor_offsets {
            let j = i as i64 + off;
            if j >= 0 && (j as usize) < t {
                pair_list.push((i, j as usize));
            }
        }
    }
    let pairs = exec.map_indexed(pair_list.len(), |p| {
        let (i, j) = pair_list[p];
        warp_pair(frames, i, j, cfg)
    });
    let consistent: u64 = pairs.iter().map(|p| p.consistent).sum();
    let in_bounds: u64 = pairs.iter().map(|p| p.in_bounds).sum();
    if in_bounds == 0 {
        return Err(Error::Undefined("MVCS has no in-bounds warps"));
    }
    Ok(Mvcs {
        score: 100.0 * consistent as f64 / in_bounds as f64,
        consistent,
        in_bounds,
        pairs,
    })
}

fn warp_pair(frames: &FrameSet, i: usize, j: usize, cfg: &MetricsConfig) -> PairCounts {
    let (src, dst) = (&frames.frames()[i], &frames.frames()[j]);
    let mut counts = PairCounts {
        source: i,
        target: j,
        consistent: 0,
        in_bounds: 0,
    };
    let depth = src.depth();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if !src.is_static_valid(u, v, cfg.dynamic_threshold) {
                continue;
            }
            let d = *depth.values().get(u, v);
            let x = backproject_pixel(u, v, d, src.intrinsics(), src.pose());
            let Some((uw, vw, zw)) = project(x, dst.intrinsics(), dst.pose()).in_front() else {
                continue;
            };
            let Some(px) = dst.intrinsics().nearest_pixel(uw, vw) else { continue };
            let Some(dj) = dst.depth().depth(px.u as usize, px.v as usize) else {
                continue;
            };
            counts.in_bounds += 1;
            if libm::fabs(zw - dj) / dj < cfg.mvcs_rel_tol {
                counts.consistent += 1;
            }
        }
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameReprojection {
    /// Sum of pixel distances.
    pub total: f64,
    pub pixels: u64,
}

impl FrameReprojection {
    pub fn mean(&self) -> Option<f64> {
        (self.pixels > 0).then(|| self.total / self.pixels as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReprojectionError {
    /// Mean pixel distance over every measured pixel of every frame.
    pub mean: f64,
    pub per_frame: Vec<FrameReprojection>,
    pub fused_points: usize,
}

pub fn reprojection_error(frames: &FrameSet, cfg: &MetricsConfig, fusion: &FusionConfig) -> Result<ReprojectionError> {
    reprojection_error_with(&Sequential, frames, cfg, fusion)
}

/// For every valid static pixel, finds the fused point nearest (in 3D) to the
/// pixel's own backprojection, projects it back into the frame and measures
/// the pixel distance to the original pixel center.
pub fn reprojection_error_with<E: Executor>(
    exec: &E,
    frames: &FrameSet,
    cfg: &MetricsConfig,
    fusion: &FusionConfig,
) -> Result<ReprojectionError> {
    cfg.validate()?;
    let mut fusion = fusion.clone();
    if let Some(voxel) = cfg.reproj_voxel {
        fusion.voxel = voxel;
    }
    let cloud = build_global_cloud_with(exec, frames, &fusion)?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("fused cloud has no points"));
    }
    let grid = SpatialGrid::auto(cloud.points(), 4);
    let per_frame = exec.map_indexed(frames.len(), |i| {
        let f = &frames.frames()[i];
        let depth = f.depth();
        let mut acc = FrameReprojection { total: 0.0, pixels: 0 };
        for v in 0..depth.height() {
            for u in 0..depth.width() {
                if !f.is_static_valid(u, v, cfg.dynamic_threshold) {
                    continue;
                }
                let d = *depth.values().get(u, v);
                let x = backproject_pixel(u, v, d, f.intrinsics(), f.pose());
                let Some(nn) = grid.nearest(x) else { continue };
                let Some((pu, pv, _)) = project(cloud.points()[nn.index], f.intrinsics(), f.pose()).in_front() else {
                    continue;
                };
                acc.total += libm::hypot(pu - u as f64, pv - v as f64);
                acc.pixels += 1;
            }
        }
        acc
    });
    let mut total = 0.0;
    let mut pixels = 0u64;
    for f in &per_frame {
        total += f.total;
        pixels += f.pixels;
    }
    if pixels == 0 {
        return Err(Error::Undefined("no pixel could be reprojected"));
    }
    Ok(ReprojectionError {
        mean: total / pixels as f64,
        per_frame,
        fused_points: cloud.len(),
    })
}
