//! The `DFR1` raster format: magic, `u32` width and height, then row-major
//! little-endian `f32` samples.

use std::path::Path;

use geocons_core::{DepthMap, Raster};

use crate::error::IoError;

pub const MAGIC: &[u8; 4] = b"DFR1";
const HEADER: u64 = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthRaster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthRaster {
    pub fn from_raster(r: &Raster<f64>) -> Self {
        Self {
            width: r.width() as u32,
            height: r.height() as u32,
            data: r.as_slice().iter().map(|v| *v as f32).collect(),
        }
    }

    /// Invalid pixels of `depth` are written as NaN.
    pub fn from_depth(depth: &DepthMap) -> Self {
        let mut out = Self::from_raster(depth.values());
        for (x, ok) in out.data.iter_mut().zip(depth.valid().as_slice()) {
            if !ok {
                *x = f32::NAN;
            }
        }
        out
    }

    pub fn to_raster(&self) -> Raster<f64> {
        let data = self.data.iter().map(|v| *v as f64).collect();
        Raster::from_vec(self.width as usize, self.height as usize, data).expect("length checked on construction")
    }

    /// Non-finite and non-positive samples become invalid pixels.
    pub fn to_depth(&self) -> DepthMap {
        DepthMap::from_values(self.to_raster())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER as usize + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, IoError> {
        let actual = bytes.len() as u64;
        if actual < HEADER {
            if actual >= 4 && &bytes[..4] != MAGIC {
                return Err(IoError::BadMagic { path: path.into() });
            }
            return Err(IoError::Truncated {
                path: path.into(),
                expected: HEADER,
                actual,
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(IoError::BadMagic { path: path.into() });
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let expected = HEADER + 4 * width as u64 * height as u64;
        if actual < expected {
            return Err(IoError::Truncated {
                path: path.into(),
                expected,
                actual,
            });
        }
        if actual > expected {
            return Err(IoError::TrailingData {
                path: path.into(),
                expected,
                actual,
            });
        }
        let data = bytes[HEADER as usize..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { width, height, data })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| IoError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_bytes() {
        let r = DepthRaster {
            width: 1,
            height: 1,
            data: vec![2.0],
        };
        assert_eq!(r.to_bytes(), b"DFR1\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x00\x40");
    }

    #[test]
    fn truncated_and_trailing() {
        let p = Path::new("x.dfr");
        let mut b = DepthRaster { width: 2, height: 2, data: vec![1.0; 4] }.to_bytes();
        b.truncate(12 + 12);
        assert!(matches!(DepthRaster::from_bytes(&b, p), Err(IoError::Truncated { expected: 28, actual: 24, .. })));
        b.extend_from_slice(&[0; 8]);
        assert!(matches!(DepthRaster::from_bytes(&b, p), Err(IoError::TrailingData { .. })));
        assert!(matches!(DepthRaster::from_bytes(b"DFR2\0\0\0\0\0\0\0\0", p), Err(IoError::BadMagic { .. })));
        assert!(matches!(DepthRaster::from_bytes(b"DF", p), Err(IoError::Truncated { .. })));
    }
}
