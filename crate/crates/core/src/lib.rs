//! Multi-view geometric consistency for RGB-D video.
//!
//! Frames carry a z-depth map, a camera-to-world pose, pinhole intrinsics and
//! an optional motion-probability map. From those this crate builds a fused
//! global point cloud, scores how well each frame agrees with it (the
//! thresholded reprojection loss and its gradient), computes the multi-view
//! consistency score and reprojection error, and provides the small amount of
//! training-side arithmetic needed to stage such a loss into a diffusion model.
//!
//! The crate is `no_std` and only needs `alloc`. Work that parallelizes per
//! frame is expressed through [`exec::Executor`]; the default
//! [`exec::Sequential`] executor runs on the calling thread.
#![no_std]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod frames;
pub mod fusion;
pub mod geo_loss;
pub mod geometry;
pub mod knn;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod raster;
pub mod training;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use frames::{Frame, FrameSet, MotionProbMap};
pub use fusion::{build_global_cloud, FusionConfig, PointCloud, Provenance, VoxelSize};
pub use geo_loss::{geo_loss, geo_loss_grad, GeoLoss, GeoLossConfig};
pub use geometry::{backproject, pose_inverse, project, CameraIntrinsics, CameraPose, DepthMap, PixelIndex, Projection};
pub use math::{Mat3, Point3, Vec3};
pub use metrics::{mvcs, reprojection_error, MetricsConfig};
pub use raster::Raster;
