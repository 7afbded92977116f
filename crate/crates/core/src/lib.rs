//! Voxel field fusion.
//!
//! Camera features are lifted into a LiDAR voxel grid along the rays of
//! voxels that project onto each sampled image cell. Each voxel on a ray is
//! weighted by a learned score and the weighted image feature is added into
//! the voxel field, completing empty voxels along the way. A mixed augmentor
//! keeps points and image aligned under copy-paste, flip, rescale and
//! rotation.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: dense f64 kernels with a small reverse-mode tape.
//! * [`geometry`]: grids, calibration, projection and voxelization.
//! * [`augment`]: cross-modality augmentation.
//! * [`sampler`]: ray seed selection and its 2D Gaussian target.
//! * [`ray`]: voxel rays per image cell.
//! * [`fusion`]: ray-voxel interaction and the ray-wise loss.
//! * [`pipeline`]: synthetic scenes, end-to-end runs, training, reports.

pub mod augment;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod geometry;
pub mod numerics;
pub mod pipeline;
pub mod ray;
pub mod sampler;

pub use error::{Error, Result};
pub use exec::Exec;
