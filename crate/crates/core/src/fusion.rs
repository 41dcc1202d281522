//! Global point-cloud construction and denoising.
//!
//! The global cloud is the union of every frame's backprojected valid pixels.
//! Two optional denoising steps follow: statistical outlier removal and voxel
//! grid downsampling, by default in that order so that outliers cannot drag
//! voxel centroids.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::exec::{chunk_ranges, Executor, Sequential};
use crate::frames::{Frame, FrameSet};
use crate::geometry::{backproject_pixel, PixelIndex};
use crate::knn::{knn_of_point, KnnBackend, SpatialGrid};
use crate::math::{Point3, Vec3};

/// Where a cloud point came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub frame: u32,
    pub pixel: PixelIndex,
}

/// World-space points with per-point provenance and motion probability.
///
/// Provenance is stored as a compressed list: point `i` owns
/// `provenance[offsets[i]..offsets[i + 1]]`. Raw backprojected points have a
/// single entry; voxel centroids carry all their members.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    motion_prob: Vec<f64>,
    offsets: Vec<usize>,
    provenance: Vec<Provenance>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self {
            offsets: alloc::vec![0],
            ..Default::default()
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        Self {
            points: Vec::with_capacity(n),
            motion_prob: Vec::with_capacity(n),
            offsets,
            provenance: Vec::with_capacity(n),
        }
    }

    /// Cloud without provenance information (each point gets an empty list).
    pub fn from_points(points: Vec<Point3>) -> Self {
        let n = points.len();
        Self {
            motion_prob: alloc::vec![0.0; n],
            offsets: alloc::vec![0; n + 1],
            points,
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, point: Point3, provenance: &[Provenance], motion_prob: f64) {
        debug_assert!(point.is_finite());
        debug_assert!((0.0..=1.0).contains(&motion_prob));
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.points.push(point);
        self.motion_prob.push(motion_prob);
        self.provenance.extend_from_slice(provenance);
        self.offsets.push(self.provenance.len());
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn motion_prob(&self) -> &[f64] {
        &self.motion_prob
    }

    pub fn provenance(&self, i: usize) -> &[Provenance] {
        if self.offsets.len() <= i + 1 {
            return &[];
        }
        &self.provenance[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Concatenates clouds in the given order.
    pub fn concat(parts: impl IntoIterator<Item = PointCloud>) -> PointCloud {
        let mut out = PointCloud::new();
        for part in parts {
            for i in 0..part.len() {
                out.push(part.points[i], part.provenance(i), part.motion_prob[i]);
            }
        }
        out
    }

    /// Keeps the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let mut out = PointCloud::with_capacity(indices.len());
        for &i in indices {
            out.push(self.points[i], self.provenance(i), self.motion_prob[i]);
        }
        out
    }

    /// Axis-aligned bounds `(min, max)`, or `None` when empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p))),
        )
    }

    /// Length of the bounding-box diagonal; 0 for empty clouds.
    pub fn diagonal(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }
}

/// Voxel edge length for downsampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VoxelSize {
    Disabled,
    /// World units.
    Absolute(f64),
    /// Fraction of the raw cloud's bounding-box diagonal.
    RelativeToDiagonal(f64),
}

impl VoxelSize {
    /// `0` disables downsampling.
    pub fn from_world_units(size: f64) -> Self {
        if size == 0.0 {
            VoxelSize::Disabled
        } else {
            VoxelSize::Absolute(size)
        }
    }

    pub fn resolve(&self, cloud: &PointCloud) -> Option<f64> {
        match *self {
            VoxelSize::Disabled => None,
            VoxelSize::Absolute(s) => Some(s),
            VoxelSize::RelativeToDiagonal(f) => {
                let s = f * cloud.diagonal();
                (s > 0.0).then_some(s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DenoiseOrder {
    #[default]
    OutliersThenVoxel,
    VoxelThenOutliers,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionConfig {
    pub voxel: VoxelSize,
    pub remove_outliers: bool,
    pub outlier_k: usize,
    pub outlier_std_ratio: f64,
    pub order: DenoiseOrder,
    pub knn: KnnBackend,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            voxel: VoxelSize::RelativeToDiagonal(0.01),
            remove_outliers: true,
            outlier_k: 16,
            outlier_std_ratio: 2.0,
            order: DenoiseOrder::OutliersThenVoxel,
            knn: KnnBackend::Grid,
        }
    }
}

impl FusionConfig {
    /// Exact union, no denoising.
    pub fn disabled() -> Self {
        Self {
            voxel: VoxelSize::Disabled,
            remove_outliers: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.voxel {
            VoxelSize::Absolute(s) | VoxelSize::RelativeToDiagonal(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(invalid("voxel_size", format!("must be positive and finite, got {s}")));
            }
            _ => {}
        }
        if self.outlier_k < 1 {
            return Err(invalid("outlier_k", "must be at least 1"));
        }
        if !(self.outlier_std_ratio > 0.0 && self.outlier_std_ratio.is_finite()) {
            return Err(invalid(
                "outlier_std_ratio",
                format!("must be positive, got {}", self.outlier_std_ratio),
            ));
        }
        Ok(())
    }
}

/// Backprojects the pixels of one frame accepted by `keep`.
pub fn backproject_frame(
    frame_index: usize,
    frame: &Frame,
    keep: impl Fn(usize, usize) -> bool,
) -> PointCloud {
    let depth = frame.depth();
    let k = frame.intrinsics();
    let mut cloud = PointCloud::with_capacity(depth.valid_count());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let Some(d) = depth.depth(u, v) else { continue };
            if !keep(u, v) {
                continue;
            }
            let prov = Provenance {
                frame: frame_index as u32,
                pixel: PixelIndex::new(u as u32, v as u32),
            };
            cloud.push(
                backproject_pixel(u, v, d, k, frame.pose()),
                &[prov],
                frame.motion_prob(u, v),
            );
        }
    }
    cloud
}

/// Union of all frames' backprojected valid pixels, in frame then row-major order.
pub fn union_cloud<E: Executor>(exec: &E, frames: &FrameSet) -> PointCloud {
    let parts = exec.map_indexed(frames.len(), |i| {
        backproject_frame(i, &frames.frames()[i], |_, _| true)
    });
    PointCloud::concat(parts)
}

/// Union restricted to pixels with motion probability `<= dynamic_threshold`.
pub fn static_union_cloud<E: Executor>(exec: &E, frames: &FrameSet, dynamic_threshold: f64) -> PointCloud {
    let parts = exec.map_indexed(frames.len(), |i| {
        let f = &frames.frames()[i];
        backproject_frame(i, f, |u, v| f.motion_prob(u, v) <= dynamic_threshold)
    });
    PointCloud::concat(parts)
}

pub fn build_global_cloud(frames: &FrameSet, config: &FusionConfig) -> Result<PointCloud> {
    build_global_cloud_with(&Sequential, frames, config)
}

pub fn build_global_cloud_with<E: Executor>(
    exec: &E,
    frames: &FrameSet,
    config: &FusionConfig,
) -> Result<PointCloud> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("frame set has no frames"));
    }
    denoise_with(exec, union_cloud(exec, frames), config)
}

/// Global cloud of static content only, for scoring static pixels.
pub fn build_static_cloud_with<E: Executor>(
    exec: &E,
    frames: &FrameSet,
    config: &FusionConfig,
    dynamic_threshold: f64,
) -> Result<PointCloud> {
    config.validate()?;
    denoise_with(exec, static_union_cloud(exec, frames, dynamic_threshold), config)
}

/// Applies the configured denoising steps to an already built cloud.
pub fn denoise_with<E: Executor>(exec: &E, raw: PointCloud, config: &FusionConfig) -> Result<PointCloud> {
    config.validate()?;
    // Relative voxel sizes are measured on the raw union.
    let voxel = config.voxel.resolve(&raw);
    let outliers = |c: PointCloud| -> PointCloud {
        if config.remove_outliers {
            remove_statistical_outliers_with(exec, &c, config.outlier_k, config.outlier_std_ratio, config.knn)
        } else {
            c
        }
    };
    let downsample = |c: PointCloud| -> Result<PointCloud> {
        match voxel {
            Some(s) => voxel_downsample(&c, s),
            None => Ok(c),
        }
    };
    match config.order {
        DenoiseOrder::OutliersThenVoxel => downsample(outliers(raw)),
        DenoiseOrder::VoxelThenOutliers => Ok(outliers(downsample(raw)?)),
    }
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// Voxel of a point is `floor(coord / voxel_size)` per axis. Centroids keep the
/// mean motion probability and the union of member provenance. Output is
/// ordered by each voxel's first member.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(invalid("voxel_size", format!("must be positive and finite, got {voxel_size}")));
    }
    let keys: Vec<[i64; 3]> = cloud
        .points()
        .iter()
        .map(|p| {
            [
                libm::floor(p.x / voxel_size) as i64,
                libm::floor(p.y / voxel_size) as i64,
                libm::floor(p.z / voxel_size) as i64,
            ]
        })
        .collect();
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_unstable_by(|a, b| keys[*a].cmp(&keys[*b]).then(a.cmp(b)));

    // Groups of member indices, each ascending; sorted by first member.
    let mut groups: Vec<&[usize]> = order.chunk_by(|a, b| keys[*a] == keys[*b]).collect();
    groups.sort_unstable_by_key(|g| g[0]);

    let mut out = PointCloud::with_capacity(groups.len());
    let mut prov = Vec::new();
    for members in groups {
        let mut sum = Vec3::ZERO;
        let mut prob = 0.0;
        prov.clear();
        for &i in members {
            sum += cloud.points()[i];
            prob += cloud.motion_prob()[i];
            prov.extend_from_slice(cloud.provenance(i));
        }
        let n = members.len() as f64;
        out.push(sum / n, &prov, (prob / n).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Mean distance from each point to its `k` nearest neighbors (self excluded).
pub fn mean_knn_distances<E: Executor>(exec: &E, points: &[Point3], k: usize, backend: KnnBackend) -> Vec<f64> {
    let grid = match backend {
        KnnBackend::Grid => Some(SpatialGrid::auto(points, k.max(1))),
        KnnBackend::BruteForce => None,
    };
    let chunks = chunk_ranges(points.len(), 4096);
    let parts = exec.map_indexed(chunks.len(), |c| {
        chunks[c]
            .clone()
            .map(|i| {
                let nn = knn_of_point(points, grid.as_ref(), i, k);
                let total: f64 = nn.iter().map(|n| n.distance()).sum();
                total / nn.len().max(1) as f64
            })
            .collect::<Vec<f64>>()
    });
    parts.into_iter().flatten().collect()
}

pub fn remove_statistical_outliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> PointCloud {
    remove_statistical_outliers_with(&Sequential, cloud, k, std_ratio, KnnBackend::Grid)
}

/// Drops points whose mean k-NN distance exceeds `mean + std_ratio * std` of
/// all per-point means (population standard deviation). Clouds with at most
/// `k` points are returned unchanged.
pub fn remove_statistical_outliers_with<E: Executor>(
    exec: &E,
    cloud: &PointCloud,
    k: usize,
    std_ratio: f64,
    backend: KnnBackend,
) -> PointCloud {
    if k == 0 || cloud.len() <= k {
        return cloud.clone();
    }
    let means = mean_knn_distances(exec, cloud.points(), k, backend);
    // Identical neighborhoods everywhere: the mean may round below each entry.
    if means.iter().all(|m| *m == means[0]) {
        return cloud.clone();
    }
    let n = means.len() as f64;
    let mu = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n;
    let threshold = mu + std_ratio * libm::sqrt(var);
    let keep: Vec<usize> = means
        .iter()
        .enumerate()
        .filter(|(_, m)| **m <= threshold)
        .map(|(i, _)| i)
        .collect();
    if keep.len() == cloud.len() {
        return cloud.clone();
    }
    cloud.select(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};

    fn flat_frame(depth: f64, pose: CameraPose) -> Frame {
        let k = CameraIntrinsics::centered(4.0, 4, 4).unwrap();
        Frame::new(DepthMap::constant(4, 4, depth), pose, k, None).unwrap()
    }

    #[test]
    fn union_of_two_frames() {
        let frames = FrameSet::new(alloc::vec![
            flat_frame(1.0, CameraPose::IDENTITY),
            flat_frame(2.0, CameraPose::from_translation(Vec3::new(1.0, 0.0, 0.0))),
        ])
        .unwrap();
        let cloud = build_global_cloud(&frames, &FusionConfig::disabled()).unwrap();
        assert_eq!(cloud.len(), 32);
        assert_eq!(cloud.provenance(20)[0].frame, 1);
        assert!(cloud.points()[..16].iter().all(|p| p.z == 1.0));
    }

    #[test]
    fn empty_frame_set_rejected() {
        assert!(FrameSet::new(Vec::new()).is_err());
    }

    #[test]
    fn voxel_centroid_of_one_bucket() {
        let cloud = PointCloud::from_points(alloc::vec![Vec3::ZERO, Vec3::new(0.004, 0.0, 0.0)]);
        let out = voxel_downsample(&cloud, 0.01).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.points()[0], Vec3::new(0.002, 0.0, 0.0));
    }

    #[test]
    fn far_apart_points_survive_downsampling() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64 * 0.05 + 0.001, 0.003, 0.0)).collect();
        let out = voxel_downsample(&PointCloud::from_points(pts.clone()), 0.01).unwrap();
        assert_eq!(out.points(), &pts[..]);
    }

    #[test]
    fn voxel_downsample_edge_cases() {
        assert!(voxel_downsample(&PointCloud::new(), 0.1).unwrap().is_empty());
        assert!(voxel_downsample(&PointCloud::new(), 0.0).is_err());
        assert!(voxel_downsample(&PointCloud::new(), -1.0).is_err());
    }

    #[test]
    fn centroid_merges_provenance_and_motion() {
        let mut c = PointCloud::new();
        let p = |f: u32| Provenance { frame: f, pixel: PixelIndex::new(f, 0) };
        c.push(Vec3::new(0.1, 0.1, 0.1), &[p(0)], 0.0);
        c.push(Vec3::new(5.0, 0.1, 0.1), &[p(1)], 1.0);
        c.push(Vec3::new(0.2, 0.1, 0.1), &[p(2)], 1.0);
        let out = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.provenance(0), &[p(0), p(2)]);
        assert_eq!(out.motion_prob(), &[0.5, 1.0]);
    }

    #[test]
    fn small_cloud_unchanged_by_outlier_removal() {
        let c = PointCloud::from_points((0..8).map(|i| Vec3::new(i as f64 * 10.0, 0.0, 0.0)).collect());
        assert_eq!(remove_statistical_outliers(&c, 8, 2.0), c);
    }

    #[test]
    fn congruent_neighborhoods_keep_everything() {
        // Cube vertices: every point sees the same 7 neighbor distances.
        let mut pts = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let c = PointCloud::from_points(pts);
        assert_eq!(remove_statistical_outliers(&c, 7, 2.0), c);
    }

    #[test]
    fn finite_grid_loses_only_its_corners() {
        // Frozen from a dense-matrix brute-force evaluation of the rule.
        let mut pts = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                for z in 0..10 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let c = PointCloud::from_points(pts);
        let out = remove_statistical_outliers(&c, 8, 2.0);
        assert_eq!(out.len(), 992);
        let corner = |p: &Vec3| [p.x, p.y, p.z].iter().all(|v| *v == 0.0 || *v == 9.0);
        assert!(!out.points().iter().any(corner));
    }

    #[test]
    fn relative_voxel_uses_raw_diagonal() {
        let c = PointCloud::from_points(alloc::vec![Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)]);
        assert_eq!(VoxelSize::RelativeToDiagonal(0.01).resolve(&c), Some(0.05));
        assert_eq!(VoxelSize::from_world_units(0.0), VoxelSize::Disabled);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FusionConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.outlier_k = 0;
        assert!(cfg.validate().is_err());
        let cfg = FusionConfig { outlier_std_ratio: 0.0, ..FusionConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = FusionConfig { voxel: VoxelSize::Absolute(-1.0), ..FusionConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
