use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Integer voxel coordinate `[x, y, z]`. Ordering is lexicographic, which
/// is also the linear (row-major) index order of [`GridSpec::linear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelIndex(pub [usize; 3]);

impl VoxelIndex {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self([x, y, z])
    }

    /// Continuous voxel-space coordinate of the voxel center.
    pub fn center(self) -> [f64; 3] {
        self.0.map(|c| c as f64 + 0.5)
    }

    /// Euclidean distance in voxel units.
    pub fn distance(self, other: VoxelIndex) -> f64 {
        self.0
            .iter()
            .zip(other.0)
            .map(|(&a, b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Axis-aligned voxel grid in the LiDAR (world) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub voxel_size: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], voxel_size: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        if voxel_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Config(format!(
                "invalid voxel size {voxel_size:?} or origin {origin:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("grid dims must be positive, got {dims:?}")));
        }
        Ok(Self {
            origin,
            voxel_size,
            dims,
        })
    }

    pub fn num_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, v: VoxelIndex) -> bool {
        v.0.iter().zip(self.dims).all(|(&c, d)| c < d)
    }

    pub fn linear(&self, v: VoxelIndex) -> usize {
        (v.0[0] * self.dims[1] + v.0[1]) * self.dims[2] + v.0[2]
    }

    pub fn from_linear(&self, n: usize) -> VoxelIndex {
        let z = n % self.dims[2];
        let y = (n / self.dims[2]) % self.dims[1];
        let x = n / (self.dims[1] * self.dims[2]);
        VoxelIndex([x, y, z])
    }

    /// All voxels in linear order.
    pub fn iter(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        (0..self.num_voxels()).map(move |n| self.from_linear(n))
    }

    /// World position of the voxel center.
    pub fn world_of(&self, v: VoxelIndex) -> [f64; 3] {
        let c = v.center();
        [0, 1, 2].map(|a| self.origin[a] + c[a] * self.voxel_size[a])
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn index_of(&self, p: [f64; 3]) -> Option<VoxelIndex> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size[a]).floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(VoxelIndex(idx))
    }

    /// Maps homogeneous continuous voxel coordinates to world coordinates.
    pub fn voxel_to_world(&self) -> Matrix4<f64> {
        let [sx, sy, sz] = self.voxel_size;
        let [ox, oy, oz] = self.origin;
        Matrix4::new(
            sx, 0.0, 0.0, ox, //
            0.0, sy, 0.0, oy, //
            0.0, 0.0, sz, oz, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    /// Voxel position scaled into `[0, 1]^3`; the first voxel maps to the
    /// origin and the last to `(1, 1, 1)`.
    pub fn normalized(&self, v: VoxelIndex) -> [f64; 3] {
        [0, 1, 2].map(|a| {
            if self.dims[a] > 1 {
                v.0[a] as f64 / (self.dims[a] - 1) as f64
            } else {
                0.0
            }
        })
    }
}
