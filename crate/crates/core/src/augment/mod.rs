//! Mixed augmentor: copy-paste for added samples, paired point/image
//! transforms for flip and rescale, reprojection for rotation.

mod affine;
mod db;
mod image;
mod ops;
mod paste;
mod record;

pub use affine::fit_affine;
pub use db::{load_db, save_db, INDEX_FILE};
pub use image::Image;
pub use ops::{
    apply_flip, apply_rescale, apply_rotate, flip_transform, rotation_z, sample_correspondences, ImageOpMode,
    AFFINE_SAMPLES, RESCALE_BOUNDS, ROTATE_BOUND,
};
pub use paste::{gt_sample_paste, Box3D, PasteResult, PixelBox, SampledObject};
pub use record::AugmentRecord;
