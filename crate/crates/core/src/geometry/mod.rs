//! Frames, calibration, voxelization and voxel-to-image projection.

mod calib;
mod field;
mod grid;
mod pointcloud;
mod projection;

pub use calib::{parse_kitti_calib, KittiCalib};
pub(crate) use field::hex;
pub use field::{voxelize, VoxelField, VoxelizeStats};
pub use grid::{GridSpec, VoxelIndex};
pub use pointcloud::PointCloud;
pub use projection::{apply, compose_projection, Camera, Projection, ProjectionTransform};
