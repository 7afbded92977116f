//! Voxel rays: every voxel whose center projects onto one feature cell,
//! ordered front to back.

mod construct;

pub use construct::{brute_force_ray_oracle, construct_ray, construct_rays, mark_anchors, ORACLE_MAX_VOXELS};

use serde::{Deserialize, Serialize};

use crate::geometry::{ProjectionTransform, VoxelIndex};

/// The voxels behind one feature cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ray {
    /// Feature-grid cell `(u, v)`.
    pub pixel: (usize, usize),
    /// Sorted by homogeneous depth, ties by voxel index.
    pub voxels: Vec<VoxelIndex>,
    /// Positions in `voxels` of occupied (anchor) voxels, ascending.
    pub anchors: Vec<usize>,
}

impl Ray {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn anchor_voxels(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        self.anchors.iter().map(|&i| self.voxels[i])
    }

    pub fn depths(&self, vt: &ProjectionTransform) -> Vec<f64> {
        self.voxels.iter().map(|&v| vt.depth(v)).collect()
    }
}
