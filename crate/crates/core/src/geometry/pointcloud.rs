use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// LiDAR returns `(x, y, z, intensity)` in world meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 4]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 4]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xyz(p: &[f64; 4]) -> [f64; 3] {
        [p[0], p[1], p[2]]
    }

    /// Parses the KITTI `.bin` layout: little-endian f32 quadruples.
    pub fn from_kitti_bin(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(16) {
            return Err(Error::Scene(format!(
                "point buffer of {} bytes is not a multiple of 16",
                bytes.len()
            )));
        }
        let points: Vec<[f64; 4]> = bytes
            .chunks_exact(16)
            .map(|c| {
                let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
                [f(0), f(4), f(8), f(12)]
            })
            .collect();
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(Self { points })
    }

    pub fn to_kitti_bin(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 16);
        for p in &self.points {
            for v in p {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn read_kitti_bin(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_kitti_bin(&buf)
    }

    pub fn write_kitti_bin(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_kitti_bin())?;
        Ok(())
    }
}
