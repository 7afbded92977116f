use nalgebra::{Matrix2x3, Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

/// Exact description of the sample-static transforms applied to one scene.
///
/// `point_transform` is what was applied to the cloud (world to augmented
/// world); `affine2d` is what was applied to the image, in continuous pixel
/// coordinates where pixel `u` spans `[u, u + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub flip: bool,
    pub rescale: f64,
    /// Radians about the gravity (z) axis.
    pub rotate: f64,
    pub affine2d: Matrix2x3<f64>,
    /// RMS pixel error of the fitted image affine; zero when no fit ran.
    pub fit_residual: f64,
    pub point_transform: Matrix4<f64>,
}

impl Default for AugmentRecord {
    fn default() -> Self {
        Self::identity()
    }
}

impl AugmentRecord {
    pub fn identity() -> Self {
        Self {
            flip: false,
            rescale: 1.0,
            rotate: 0.0,
            affine2d: Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
            fit_residual: 0.0,
            point_transform: Matrix4::identity(),
        }
    }

    /// The image affine as a 3x3 homogeneous matrix.
    pub fn image_affine3(&self) -> Matrix3<f64> {
        let a = &self.affine2d;
        Matrix3::new(
            a[(0, 0)],
            a[(0, 1)],
            a[(0, 2)],
            a[(1, 0)],
            a[(1, 1)],
            a[(1, 2)],
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn map_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let a = &self.affine2d;
        (
            a[(0, 0)] * x + a[(0, 1)] * y + a[(0, 2)],
            a[(1, 0)] * x + a[(1, 1)] * y + a[(1, 2)],
        )
    }

    pub fn map_point(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.point_transform;
        [0, 1, 2].map(|r| m[(r, 0)] * p[0] + m[(r, 1)] * p[1] + m[(r, 2)] * p[2] + m[(r, 3)])
    }

    /// Record for applying `self` first and `next` second. Residuals add,
    /// which bounds the combined misalignment.
    pub fn then(&self, next: &AugmentRecord) -> AugmentRecord {
        let a = next.image_affine3() * self.image_affine3();
        AugmentRecord {
            flip: self.flip ^ next.flip,
            rescale: self.rescale * next.rescale,
            rotate: self.rotate + next.rotate,
            affine2d: a.fixed_view::<2, 3>(0, 0).into(),
            fit_residual: self.fit_residual + next.fit_residual,
            point_transform: next.point_transform * self.point_transform,
        }
    }
}
