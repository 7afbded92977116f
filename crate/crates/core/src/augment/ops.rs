//! Sample-static augmentations: flip, rescale, rotate.

use nalgebra::{Matrix2x3, Matrix4, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::affine::fit_affine;
use super::image::Image;
use super::record::AugmentRecord;
use crate::geometry::{Camera, PointCloud};
use crate::{Error, Result};

/// Number of projected LiDAR points used to fit an image affine.
pub const AFFINE_SAMPLES: usize = 100;
pub const RESCALE_BOUNDS: (f64, f64) = (0.5, 2.0);
pub const ROTATE_BOUND: f64 = std::f64::consts::FRAC_PI_4;

/// How the image follows a point transform that changes appearance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageOpMode {
    /// Transform the image too (flip / fitted affine).
    #[default]
    ImageLevel,
    /// Leave the image alone and fold the inverse point transform into the
    /// projection. Used for rigs whose image ops cannot be aligned.
    Reproject,
}

fn transform_cloud(points: &PointCloud, m: &Matrix4<f64>) -> PointCloud {
    let rec = AugmentRecord {
        point_transform: *m,
        ..AugmentRecord::identity()
    };
    PointCloud::new(
        points
            .points
            .iter()
            .map(|p| {
                let q = rec.map_point(PointCloud::xyz(p));
                [q[0], q[1], q[2], p[3]]
            })
            .collect(),
    )
}

/// Reflection across the vertical plane that contains the camera center
/// and its forward axis.
pub fn flip_transform(camera: &Camera) -> Matrix4<f64> {
    let a = camera.matrix.fixed_view::<3, 3>(0, 0).into_owned();
    let b = camera.matrix.column(3).into_owned();
    let center = a.try_inverse().map(|inv| -(inv * b)).unwrap_or_else(Vector3::zeros);
    let forward = Vector3::new(a[(2, 0)], a[(2, 1)], a[(2, 2)]);
    let normal = forward.cross(&Vector3::z());
    let normal = if normal.norm() > 0.0 {
        normal.normalize()
    } else {
        Vector3::y()
    };
    let r = nalgebra::Matrix3::identity() - 2.0 * normal * normal.transpose();
    let t = 2.0 * normal * normal.dot(&center);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Mirrors the cloud across the camera-forward vertical plane and the
/// image left-right, so pixel `u` maps to `W - 1 - u`.
pub fn apply_flip(
    points: &PointCloud,
    image: &Image,
    camera: &Camera,
    mode: ImageOpMode,
) -> (PointCloud, Image, AugmentRecord) {
    let m = flip_transform(camera);
    let (image, affine2d) = match mode {
        ImageOpMode::ImageLevel => (
            image.flip_horizontal(),
            Matrix2x3::new(-1.0, 0.0, image.width as f64, 0.0, 1.0, 0.0),
        ),
        ImageOpMode::Reproject => (image.clone(), AugmentRecord::identity().affine2d),
    };
    let record = AugmentRecord {
        flip: true,
        affine2d,
        point_transform: m,
        ..AugmentRecord::identity()
    };
    (transform_cloud(points, &m), image, record)
}

/// Pixel correspondences `(P c, P G c)` for up to [`AFFINE_SAMPLES`]
/// randomly chosen points visible before and in front after the transform.
pub fn sample_correspondences(
    points: &PointCloud,
    camera: &Camera,
    transform: &Matrix4<f64>,
    rng: &mut impl Rng,
) -> Vec<([f64; 2], [f64; 2])> {
    let rec = AugmentRecord {
        point_transform: *transform,
        ..AugmentRecord::identity()
    };
    let visible: Vec<(usize, [f64; 2], [f64; 2])> = points
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let c = PointCloud::xyz(p);
            camera.pixel_of(c)?;
            let (x, y, _) = camera.project_point(c);
            let (x2, y2, d2) = camera.project_point(rec.map_point(c));
            (d2 > 0.0).then_some((i, [x, y], [x2, y2]))
        })
        .collect();
    let k = AFFINE_SAMPLES.min(visible.len());
    let mut picks: Vec<usize> = sample(rng, visible.len(), k).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|j| (visible[j].1, visible[j].2)).collect()
}

/// Scales the cloud about the LiDAR origin. In image-level mode the image
/// is warped by an affine fitted to 100 projected correspondences.
pub fn apply_rescale(
    points: &PointCloud,
    image: &Image,
    factor: f64,
    camera: &Camera,
    mode: ImageOpMode,
    rng: &mut impl Rng,
) -> Result<(PointCloud, Image, AugmentRecord)> {
    let (lo, hi) = RESCALE_BOUNDS;
    if !(lo..=hi).contains(&factor) {
        return Err(Error::OutOfRange {
            name: "rescale factor",
            value: factor,
            min: lo,
            max: hi,
        });
    }
    let m = Matrix4::new_scaling(factor).map_with_location(|r, c, v| if r == 3 && c == 3 { 1.0 } else { v });
    let mut record = AugmentRecord {
        rescale: factor,
        point_transform: m,
        ..AugmentRecord::identity()
    };
    let out_points = transform_cloud(points, &m);
    if factor == 1.0 || mode == ImageOpMode::Reproject {
        return Ok((out_points, image.clone(), record));
    }
    let pairs = sample_correspondences(points, camera, &m, rng);
    let (affine, residual) = fit_affine(&pairs)?;
    record.affine2d = affine;
    record.fit_residual = residual;
    let warped = image.warp_affine(&record.image_affine3());
    Ok((out_points, warped, record))
}

/// Rotates the cloud about the gravity axis. The image is untouched; the
/// inverse rotation is folded into the projection by
/// [`compose_projection`](crate::geometry::compose_projection).
pub fn apply_rotate(points: &PointCloud, rotation: f64) -> Result<(PointCloud, AugmentRecord)> {
    if !(rotation.abs() <= ROTATE_BOUND) {
        return Err(Error::OutOfRange {
            name: "rotation",
            value: rotation,
            min: -ROTATE_BOUND,
            max: ROTATE_BOUND,
        });
    }
    let m = rotation_z(rotation);
    let record = AugmentRecord {
        rotate: rotation,
        point_transform: m,
        ..AugmentRecord::identity()
    };
    Ok((transform_cloud(points, &m), record))
}

pub fn rotation_z(angle: f64) -> Matrix4<f64> {
    let (s, c) = angle.sin_cos();
    Matrix4::new(
        c, -s, 0.0, 0.0, //
        s, c, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}
