use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::grid::{GridSpec, VoxelIndex};
use super::pointcloud::PointCloud;

/// Sparse map from voxel index to feature vector. Absent voxels read as
/// the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    grid: GridSpec,
    channels: usize,
    features: BTreeMap<VoxelIndex, Vec<f64>>,
    occupancy: BTreeSet<VoxelIndex>,
}

impl VoxelField {
    pub fn new(grid: GridSpec, channels: usize) -> Self {
        Self {
            grid,
            channels,
            features: BTreeMap::new(),
            occupancy: BTreeSet::new(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn occupancy(&self) -> &BTreeSet<VoxelIndex> {
        &self.occupancy
    }

    pub fn is_occupied(&self, v: VoxelIndex) -> bool {
        self.occupancy.contains(&v)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn features(&self) -> &BTreeMap<VoxelIndex, Vec<f64>> {
        &self.features
    }

    pub fn read(&self, v: VoxelIndex) -> Vec<f64> {
        self.features
            .get(&v)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.channels])
    }

    /// Sets a voxel's feature and marks it occupied.
    pub fn set(&mut self, v: VoxelIndex, feature: Vec<f64>) {
        assert_eq!(feature.len(), self.channels, "feature width");
        debug_assert!(self.grid.contains(v));
        self.features.insert(v, feature);
        self.occupancy.insert(v);
    }

    /// `F(v) += delta`; an empty voxel starts from zero and becomes occupied.
    pub fn add(&mut self, v: VoxelIndex, delta: &[f64]) {
        assert_eq!(delta.len(), self.channels, "feature width");
        debug_assert!(self.grid.contains(v));
        let entry = self.features.entry(v).or_insert_with(|| vec![0.0; delta.len()]);
        for (a, d) in entry.iter_mut().zip(delta) {
            *a += d;
        }
        self.occupancy.insert(v);
    }

    /// SHA-256 over the grid, occupancy and the bit patterns of every
    /// feature, in index order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for a in 0..3 {
            h.update(self.grid.origin[a].to_le_bytes());
            h.update(self.grid.voxel_size[a].to_le_bytes());
            h.update((self.grid.dims[a] as u64).to_le_bytes());
        }
        h.update((self.channels as u64).to_le_bytes());
        for v in &self.occupancy {
            h.update((self.grid.linear(*v) as u64).to_le_bytes());
            for x in self.read(*v) {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VoxelizeStats {
    pub inside: usize,
    pub dropped: usize,
}

/// Bins points into the grid. Each occupied voxel's feature is the mean
/// `(x, y, z, intensity)` of its points; points outside the grid are
/// dropped and counted.
pub fn voxelize(pc: &PointCloud, grid: &GridSpec) -> (VoxelField, VoxelizeStats) {
    let mut sums: BTreeMap<VoxelIndex, ([f64; 4], usize)> = BTreeMap::new();
    let mut dropped = 0;
    for p in &pc.points {
        match grid.index_of(PointCloud::xyz(p)) {
            Some(v) => {
                let e = sums.entry(v).or_insert(([0.0; 4], 0));
                for (s, x) in e.0.iter_mut().zip(p) {
                    *s += x;
                }
                e.1 += 1;
            }
            None => dropped += 1,
        }
    }
    let mut field = VoxelField::new(*grid, 4);
    for (v, (s, n)) in sums {
        field.set(v, s.iter().map(|x| x / n as f64).collect());
    }
    let stats = VoxelizeStats {
        inside: pc.len() - dropped,
        dropped,
    };
    (field, stats)
}
