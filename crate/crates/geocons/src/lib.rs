//! File formats, parallel execution and the command-line tool on top of
//! [`geocons_core`].
//!
//! Depth maps and gradients are stored as `DFR1` rasters, frame sets as a JSON
//! manifest pointing at those rasters, fused clouds as PLY, and results as JSON
//! reports with sorted keys.

pub mod cli;
pub mod dfr;
pub mod error;
pub mod exec;
pub mod manifest;
pub mod ply;
pub mod report;

pub use dfr::DepthRaster;
pub use error::IoError;
pub use exec::RayonExecutor;
pub use manifest::{read_manifest, write_manifest, LoadedManifest, Manifest};
