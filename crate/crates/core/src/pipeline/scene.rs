use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Config, FeatureSource};
use crate::augment::{Box3D, Image, PixelBox};
use crate::geometry::{Camera, GridSpec, PointCloud};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// What to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub grid: GridSpec,
    pub camera: Camera,
    pub objects: usize,
    pub points_per_object: usize,
    pub ground_points: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(Self {
            grid: cfg.grid.spec()?,
            camera: cfg.camera.camera()?,
            objects: cfg.scene.objects,
            points_per_object: cfg.scene.points_per_object,
            ground_points: cfg.scene.ground_points,
            seed: cfg.seed,
        })
    }
}

/// A generated frame: LiDAR points, a rendered image and box labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub grid: GridSpec,
    pub camera: Camera,
    pub points: PointCloud,
    pub image: Image,
    pub boxes3d: Vec<Box3D>,
    /// Projected boxes in image pixels.
    pub boxes2d: Vec<PixelBox>,
}

/// Box footprints overlap test on bounding circles.
fn collides(a: &Box3D, b: &Box3D) -> bool {
    let ra = a.size[0].hypot(a.size[1]) / 2.0;
    let rb = b.size[0].hypot(b.size[1]) / 2.0;
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]) < ra + rb
}

/// Generates objects standing on the grid floor inside the camera's view,
/// points inside each box, scattered ground points, and an image with each
/// object's projected box painted far to near.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = &spec.grid;
    let lo = g.origin;
    let hi = [0, 1, 2].map(|a| g.origin[a] + g.voxel_size[a] * g.dims[a] as f64);
    let ground = lo[2] + 0.25 * g.voxel_size[2];

    let mut boxes3d: Vec<Box3D> = Vec::new();
    let mut attempts = 0;
    while boxes3d.len() < spec.objects {
        attempts += 1;
        if attempts > 1000 {
            return Err(Error::Scene(format!(
                "could not place {} non-overlapping objects in view",
                spec.objects
            )));
        }
        let size = [
            rng.random_range(1.5..3.0),
            rng.random_range(1.0..2.0),
            rng.random_range(1.0..2.0),
        ];
        let x = rng.random_range(lo[0] + 0.3 * (hi[0] - lo[0])..hi[0] - 0.2 * (hi[0] - lo[0]));
        let y = rng.random_range(lo[1] + 0.25 * (hi[1] - lo[1])..hi[1] - 0.25 * (hi[1] - lo[1]));
        let b = Box3D {
            center: [x, y, ground + size[2] / 2.0],
            size,
            yaw: rng.random_range(-0.7..0.7),
        };
        let inside = b.corners().iter().all(|c| (0..3).all(|a| c[a] > lo[a] && c[a] < hi[a]));
        if !inside || boxes3d.iter().any(|o| collides(o, &b)) || b.project(&spec.camera).is_none() {
            continue;
        }
        boxes3d.push(b);
    }

    let mut points = Vec::new();
    for b in &boxes3d {
        let (s, c) = b.yaw.sin_cos();
        for _ in 0..spec.points_per_object {
            let l = [0, 1, 2].map(|a| rng.random_range(-0.5..0.5) * b.size[a]);
            points.push([
                b.center[0] + c * l[0] - s * l[1],
                b.center[1] + s * l[0] + c * l[1],
                b.center[2] + l[2],
                rng.random_range(0.3..1.0),
            ]);
        }
    }
    for _ in 0..spec.ground_points {
        let x = rng.random_range(lo[0]..hi[0]);
        let y = rng.random_range(lo[1]..hi[1]);
        if boxes3d.iter().any(|b| b.contains([x, y, ground])) {
            continue;
        }
        points.push([x, y, ground, rng.random_range(0.0..0.2)]);
    }

    let boxes2d: Vec<PixelBox> = boxes3d
        .iter()
        .map(|b| b.project(&spec.camera).expect("placed boxes project"))
        .collect();
    for (i, b) in boxes3d.iter().enumerate() {
        let start = i * spec.points_per_object;
        let visible = points[start..start + spec.points_per_object]
            .iter()
            .any(|p| b.contains(PointCloud::xyz(p)) && spec.camera.pixel_of(PointCloud::xyz(p)).is_some());
        if !visible {
            return Err(Error::Scene(format!("object {i} has no point visible in the image")));
        }
    }

    let image = render(&spec.camera, &boxes3d, &boxes2d);
    Ok(Scene {
        grid: spec.grid,
        camera: spec.camera.clone(),
        points: PointCloud::new(points),
        image,
        boxes3d,
        boxes2d,
    })
}

fn render(camera: &Camera, boxes3d: &[Box3D], boxes2d: &[PixelBox]) -> Image {
    let (w, h) = (camera.width, camera.height);
    let horizon = camera.project_point([1e6, 0.0, 0.0]).1;
    let mut img = Image::from_fn(w, h, 3, |_, v, c| {
        let sky = (v as f64) < horizon;
        match (sky, c) {
            (true, 2) => 0.4,
            (true, _) => 0.1,
            (false, 0) => 0.3,
            (false, _) => 0.2,
        }
    });
    let depths: Vec<f64> = boxes3d.iter().map(|b| camera.project_point(b.center).2).collect();
    let mut order: Vec<usize> = (0..boxes3d.len()).collect();
    order.sort_by(|&a, &b| depths[b].total_cmp(&depths[a]));
    for i in order {
        let b = boxes2d[i];
        let color = [
            0.9,
            (1.0 - depths[i] / 40.0).max(0.0) as f32,
            0.2 + 0.3 * (i % 3) as f32,
        ];
        for v in b.v0..b.v1 {
            for u in b.u0..b.u1 {
                img.pixel_mut(u, v).copy_from_slice(&color);
            }
        }
    }
    img
}

/// Feature cells covered by an image-pixel box.
pub fn box_to_cells(b: &PixelBox, stride: usize) -> PixelBox {
    PixelBox {
        u0: b.u0 / stride,
        v0: b.v0 / stride,
        u1: b.u1.div_ceil(stride),
        v1: b.v1.div_ceil(stride),
    }
}

/// Stand-in for an image backbone: a fixed function from an image to a
/// `[C, H / stride, W / stride]` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    pub source: FeatureSource,
    pub channels: usize,
    pub stride: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl FeatureEncoder {
    pub fn new(source: FeatureSource, channels: usize, stride: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |scale: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        };
        let weight = normal(1.5, channels * 3);
        let bias = normal(0.5, channels);
        Self {
            source,
            channels,
            stride,
            weight,
            bias,
        }
    }

    pub fn from_config(cfg: &Config) -> Self {
        Self::new(
            cfg.scene.features,
            cfg.scene.channels,
            cfg.camera.stride,
            cfg.scene.encoder_seed,
        )
    }

    /// Encoder: average-pool each stride block, then a fixed random
    /// projection to `C` channels and tanh. Pattern: a checkerboard whose
    /// period grows with the channel index.
    pub fn encode(&self, image: &Image) -> Tensor {
        let s = self.stride;
        let (hf, wf) = (image.height.div_ceil(s), image.width.div_ceil(s));
        let c = self.channels;
        let mut out = Tensor::zeros(&[c, hf, wf]);
        let data = out.data_mut();
        for v in 0..hf {
            for u in 0..wf {
                let feat: Vec<f64> = match self.source {
                    FeatureSource::Pattern => (0..c)
                        .map(|k| {
                            let p = 1 + k % 4;
                            if (u / p + v / p + k) % 2 == 0 {
                                0.5
                            } else {
                                -0.5
                            }
                        })
                        .collect(),
                    FeatureSource::Encoder => {
                        let mut pooled = [0.0f64; 3];
                        let mut n = 0.0;
                        for y in v * s..((v + 1) * s).min(image.height) {
                            for x in u * s..((u + 1) * s).min(image.width) {
                                let px = image.pixel(x, y);
                                for ch in 0..3.min(image.channels) {
                                    pooled[ch] += px[ch] as f64;
                                }
                                n += 1.0;
                            }
                        }
                        pooled.iter_mut().for_each(|p| *p /= n);
                        (0..c)
                            .map(|k| {
                                let w = &self.weight[k * 3..k * 3 + 3];
                                (self.bias[k] + w[0] * pooled[0] + w[1] * pooled[1] + w[2] * pooled[2]).tanh()
                            })
                            .collect()
                    }
                };
                for (k, f) in feat.into_iter().enumerate() {
                    data[(k * hf + v) * wf + u] = f;
                }
            }
        }
        out
    }
}
