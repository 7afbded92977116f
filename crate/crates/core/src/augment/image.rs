use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// Interleaved `H x W x C` image with f32 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f32) -> Self {
        let mut img = Self::new(width, height, channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    img.data[(v * width + u) * channels + c] = f(u, v, c);
                }
            }
        }
        img
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let i = (v * self.width + u) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let i = (v * self.width + u) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for v in 0..self.height {
            for u in 0..self.width {
                out.pixel_mut(self.width - 1 - u, v).copy_from_slice(self.pixel(u, v));
            }
        }
        out
    }

    /// Resamples through `affine` (source pixel to destination pixel) by
    /// inverse-mapping destination pixel centers, nearest neighbor. Pixels
    /// that map outside the source are zero.
    pub fn warp_affine(&self, affine: &Matrix3<f64>) -> Self {
        let inv = affine.try_inverse().expect("image affine must be invertible");
        let mut out = Self::new(self.width, self.height, self.channels);
        for v in 0..self.height {
            for u in 0..self.width {
                let (x, y) = (u as f64 + 0.5, v as f64 + 0.5);
                let sx = inv[(0, 0)] * x + inv[(0, 1)] * y + inv[(0, 2)];
                let sy = inv[(1, 0)] * x + inv[(1, 1)] * y + inv[(1, 2)];
                if sx >= 0.0 && sy >= 0.0 && sx < self.width as f64 && sy < self.height as f64 {
                    let src = self.pixel(sx.floor() as usize, sy.floor() as usize).to_vec();
                    out.pixel_mut(u, v).copy_from_slice(&src);
                }
            }
        }
        out
    }
}
