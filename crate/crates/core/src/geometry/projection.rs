use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use super::calib::KittiCalib;
use super::grid::{GridSpec, VoxelIndex};
use crate::augment::AugmentRecord;
use crate::{Error, Result};

/// A pinhole camera seen from the LiDAR frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// LiDAR point to homogeneous pixel.
    pub matrix: Matrix3x4<f64>,
    pub height: usize,
    pub width: usize,
}

impl Camera {
    pub fn from_kitti(calib: &KittiCalib, height: usize, width: usize) -> Self {
        Self {
            matrix: calib.lidar_to_image(),
            height,
            width,
        }
    }

    /// Ideal camera at the LiDAR origin looking down +x (y left, z up) with
    /// focal length `f` pixels and the principal point at the image center.
    pub fn forward(f: f64, width: usize, height: usize) -> Self {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        #[rustfmt::skip]
        let matrix = Matrix3x4::new(
            cx, -f, 0.0, 0.0,
            cy, 0.0, -f, 0.0,
            1.0, 0.0, 0.0, 0.0,
        );
        Self { matrix, height, width }
    }

    /// Continuous pixel `(x, y)` and depth of a world point.
    pub fn project_point(&self, p: [f64; 3]) -> (f64, f64, f64) {
        let h = apply(&self.matrix, p);
        (h[0] / h[2], h[1] / h[2], h[2])
    }

    /// Pixel index `(u, v)` if the point is in front and inside the image.
    pub fn pixel_of(&self, p: [f64; 3]) -> Option<(usize, usize)> {
        let (x, y, d) = self.project_point(p);
        (d > 0.0 && x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64)
            .then(|| (x.floor() as usize, y.floor() as usize))
    }
}

/// `m * [p, 1]`, summed left to right in a fixed order.
pub fn apply(m: &Matrix3x4<f64>, p: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[(r, 0)] * p[0] + m[(r, 1)] * p[1] + m[(r, 2)] * p[2] + m[(r, 3)])
}

/// Where a voxel lands on the feature grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Projection {
    Cell { u: usize, v: usize },
    Behind,
    OutOfBounds,
}

/// Voxel-space to image projection plus the feature-grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTransform {
    /// Homogeneous continuous voxel coordinate to homogeneous pixel.
    pub matrix: Matrix3x4<f64>,
    /// Image pixels per feature cell.
    pub stride: usize,
    /// `(H, W)` of the image in pixels.
    pub image_dims: (usize, usize),
}

impl ProjectionTransform {
    pub fn new(matrix: Matrix3x4<f64>, stride: usize, image_dims: (usize, usize)) -> Result<Self> {
        if stride == 0 || image_dims.0 == 0 || image_dims.1 == 0 {
            return Err(Error::Config(format!(
                "stride {stride} and image dims {image_dims:?} must be positive"
            )));
        }
        let vt = Self {
            matrix,
            stride,
            image_dims,
        };
        vt.left_block_inverse()?;
        Ok(vt)
    }

    /// `(H_f, W_f)`: feature grid size, ceil-divided by the stride.
    pub fn feature_dims(&self) -> (usize, usize) {
        (
            self.image_dims.0.div_ceil(self.stride),
            self.image_dims.1.div_ceil(self.stride),
        )
    }

    pub fn homogeneous(&self, c: [f64; 3]) -> [f64; 3] {
        apply(&self.matrix, c)
    }

    /// Homogeneous depth of a voxel center.
    pub fn depth(&self, v: VoxelIndex) -> f64 {
        let c = v.center();
        let m = &self.matrix;
        m[(2, 0)] * c[0] + m[(2, 1)] * c[1] + m[(2, 2)] * c[2] + m[(2, 3)]
    }

    pub fn project(&self, v: VoxelIndex) -> Projection {
        self.project_coords(v.center())
    }

    /// Projects a continuous voxel-space point: perspective divide, then
    /// floor of the pixel divided by the stride.
    pub fn project_coords(&self, c: [f64; 3]) -> Projection {
        let h = self.homogeneous(c);
        if !(h[2] > 0.0) {
            return Projection::Behind;
        }
        let x = h[0] / h[2];
        let y = h[1] / h[2];
        let (hgt, wid) = self.image_dims;
        if !(x >= 0.0 && y >= 0.0 && x < wid as f64 && y < hgt as f64) {
            return Projection::OutOfBounds;
        }
        let s = self.stride as f64;
        Projection::Cell {
            u: (x / s).floor() as usize,
            v: (y / s).floor() as usize,
        }
    }

    pub(crate) fn left_block_inverse(&self) -> Result<Matrix3<f64>> {
        let a: Matrix3<f64> = self.matrix.fixed_view::<3, 3>(0, 0).into();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || a.determinant().abs() <= 1e-12 * scale.powi(3) {
            return Err(Error::Singular("projection transform"));
        }
        a.try_inverse().ok_or(Error::Singular("projection transform"))
    }

    /// Camera center and the back-projected direction through pixel
    /// `(x, y)`, both in continuous voxel coordinates. A point
    /// `center + t * dir` has homogeneous depth `t`.
    pub fn back_project(&self, x: f64, y: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let inv = self.left_block_inverse()?;
        let b = Vector3::new(self.matrix[(0, 3)], self.matrix[(1, 3)], self.matrix[(2, 3)]);
        Ok((-(inv * b), inv * Vector3::new(x, y, 1.0)))
    }
}

/// Folds the augmentation into the voxel-to-image transform:
/// `A_img * P * G^-1 * V`, where `G` is the point transform that was
/// applied to the cloud, `A_img` the image affine and `V` maps voxel
/// coordinates to the (augmented) world.
pub fn compose_projection(
    grid: &GridSpec,
    camera: &Camera,
    augment: &AugmentRecord,
    stride: usize,
) -> Result<ProjectionTransform> {
    let g_inv = augment
        .point_transform
        .try_inverse()
        .ok_or(Error::Singular("augmentation point transform"))?;
    let matrix = augment.image_affine3() * camera.matrix * g_inv * grid.voxel_to_world();
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("compose_projection"));
    }
    ProjectionTransform::new(matrix, stride, (camera.height, camera.width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(m: &Matrix3x4<f64>, c: [f64; 3], stride: usize, hw: (usize, usize)) -> Projection {
        let mut h = [0.0; 3];
        for (r, hr) in h.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, ck) in c.iter().enumerate() {
                acc += m[(r, k)] * ck;
            }
            *hr = acc + m[(r, 3)];
        }
        if h[2] <= 0.0 {
            return Projection::Behind;
        }
        let (x, y) = (h[0] / h[2], h[1] / h[2]);
        if x < 0.0 || y < 0.0 || x >= hw.1 as f64 || y >= hw.0 as f64 {
            return Projection::OutOfBounds;
        }
        Projection::Cell {
            u: (x / stride as f64).floor() as usize,
            v: (y / stride as f64).floor() as usize,
        }
    }

    #[test]
    fn no_augmentation_identity_calib_is_grid_scale() {
        let grid = GridSpec::new([1.0, 2.0, 3.0], [0.5, 0.25, 2.0], [4, 4, 4]).unwrap();
        let cam = Camera::from_kitti(&KittiCalib::identity(), 100, 100);
        let vt = compose_projection(&grid, &cam, &AugmentRecord::identity(), 1).unwrap();
        let want = Matrix3x4::new(0.5, 0.0, 0.0, 1.0, 0.0, 0.25, 0.0, 2.0, 0.0, 0.0, 2.0, 3.0);
        assert_eq!(vt.matrix, want);
    }

    #[test]
    fn optical_axis_voxel_hits_principal_point() {
        // Grid with a voxel center exactly on the +x axis.
        let grid = GridSpec::new([0.0, -0.5, -0.5], [1.0; 3], [8, 1, 1]).unwrap();
        let cam = Camera::forward(50.0, 64, 48);
        let vt = compose_projection(&grid, &cam, &AugmentRecord::identity(), 1).unwrap();
        for x in 0..8 {
            assert_eq!(vt.project(VoxelIndex::new(x, 0, 0)), Projection::Cell { u: 32, v: 24 });
        }
        let vt4 = compose_projection(&grid, &cam, &AugmentRecord::identity(), 4).unwrap();
        assert_eq!(vt4.project(VoxelIndex::new(3, 0, 0)), Projection::Cell { u: 8, v: 6 });
        assert_eq!(vt4.feature_dims(), (12, 16));
    }

    #[test]
    fn voxel_behind_camera() {
        let grid = GridSpec::new([-4.0, -0.5, -0.5], [1.0; 3], [8, 1, 1]).unwrap();
        let vt = compose_projection(&grid, &Camera::forward(50.0, 64, 48), &AugmentRecord::identity(), 1).unwrap();
        assert_eq!(vt.project(VoxelIndex::new(0, 0, 0)), Projection::Behind);
        assert!(matches!(vt.project(VoxelIndex::new(6, 0, 0)), Projection::Cell { .. }));
    }

    #[test]
    fn random_transforms_match_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = GridSpec::new([2.0, -4.0, -2.0], [0.5; 3], [16, 16, 8]).unwrap();
        for _ in 0..10 {
            let mut m = Camera::forward(rng.random_range(20.0..80.0), 64, 64).matrix;
            for v in m.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
            let cam = Camera {
                matrix: m,
                height: 64,
                width: 64,
            };
            let vt = compose_projection(&grid, &cam, &AugmentRecord::identity(), 4).unwrap();
            for _ in 0..10 {
                let v = VoxelIndex::new(rng.random_range(0..16), rng.random_range(0..16), rng.random_range(0..8));
                assert_eq!(vt.project(v), oracle(&vt.matrix, v.center(), 4, (64, 64)));
            }
        }
    }

    #[test]
    fn singular_transform_rejected() {
        let m = Matrix3x4::new(1.0, 2.0, 3.0, 0.0, 2.0, 4.0, 6.0, 0.0, 0.0, 0.0, 1.0, 1.0);
        assert!(matches!(
            ProjectionTransform::new(m, 1, (10, 10)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn back_projection_inverts_projection() {
        let grid = GridSpec::new([2.0, -4.0, -2.0], [0.5; 3], [16, 16, 8]).unwrap();
        let vt = compose_projection(&grid, &Camera::forward(40.0, 64, 64), &AugmentRecord::identity(), 1).unwrap();
        let (c, d) = vt.back_project(10.5, 40.25).unwrap();
        for t in [1.0, 5.0, 13.0] {
            let p = c + d * t;
            let h = vt.homogeneous([p.x, p.y, p.z]);
            assert!((h[2] - t).abs() < 1e-9);
            assert!((h[0] / h[2] - 10.5).abs() < 1e-9 && (h[1] / h[2] - 40.25).abs() < 1e-9);
        }
    }
}
