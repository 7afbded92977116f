//! Sample-added augmentation: GT-sampled objects pasted into a scene with
//! their image crops, composited far to near.

use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::geometry::{Camera, PointCloud};

/// Oriented 3D box: center, size `(l, w, h)` and yaw about z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl Box3D {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let local = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
        (0..3).all(|a| local[a].abs() <= self.size[a] / 2.0 + 1e-9)
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let (s, c) = self.yaw.sin_cos();
        let mut out = [[0.0; 3]; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let l = if i & 1 == 0 { -0.5 } else { 0.5 } * self.size[0];
            let w = if i & 2 == 0 { -0.5 } else { 0.5 } * self.size[1];
            let h = if i & 4 == 0 { -0.5 } else { 0.5 } * self.size[2];
            *corner = [
                self.center[0] + c * l - s * w,
                self.center[1] + s * l + c * w,
                self.center[2] + h,
            ];
        }
        out
    }

    /// Pixel bounding box of the projected corners, clipped to the image.
    /// `None` when any corner is behind the camera or the box is off-image.
    pub fn project(&self, camera: &Camera) -> Option<PixelBox> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in self.corners() {
            let (x, y, d) = camera.project_point(c);
            if d <= 0.0 {
                return None;
            }
            lo = [lo[0].min(x), lo[1].min(y)];
            hi = [hi[0].max(x), hi[1].max(y)];
        }
        let clip = |v: f64, n: usize| v.clamp(0.0, n as f64);
        let b = PixelBox {
            u0: clip(lo[0].floor(), camera.width) as usize,
            v0: clip(lo[1].floor(), camera.height) as usize,
            u1: clip(hi[0].ceil(), camera.width) as usize,
            v1: clip(hi[1].ceil(), camera.height) as usize,
        };
        (b.u1 > b.u0 && b.v1 > b.v0).then_some(b)
    }
}

/// Half-open pixel rectangle `[u0, u1) x [v0, v1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub u0: usize,
    pub v0: usize,
    pub u1: usize,
    pub v1: usize,
}

impl PixelBox {
    pub fn width(&self) -> usize {
        self.u1.saturating_sub(self.u0)
    }

    pub fn height(&self) -> usize {
        self.v1.saturating_sub(self.v0)
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.u0 && u < self.u1 && v >= self.v0 && v < self.v1
    }
}

/// A database object ready to paste: its points, box, image crop, the
/// crop's placement in the image and its box-center depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledObject {
    pub class: String,
    pub points: PointCloud,
    pub box3d: Box3D,
    pub crop: Image,
    pub box2d: PixelBox,
    pub depth: f64,
}

impl SampledObject {
    /// Cuts an object out of a source scene: the points inside `box3d` and
    /// the image under its projected box.
    pub fn extract(class: &str, scene: &PointCloud, image: &Image, box3d: Box3D, camera: &Camera) -> Option<Self> {
        let box2d = box3d.project(camera)?;
        let (_, _, depth) = camera.project_point(box3d.center);
        let points = PointCloud::new(
            scene
                .points
                .iter()
                .filter(|p| box3d.contains(PointCloud::xyz(p)))
                .copied()
                .collect(),
        );
        let crop = Image::from_fn(box2d.width(), box2d.height(), image.channels, |u, v, c| {
            image.pixel(box2d.u0 + u, box2d.v0 + v)[c]
        });
        Some(Self {
            class: class.to_string(),
            points,
            box3d,
            crop,
            box2d,
            depth,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PasteResult {
    pub points: PointCloud,
    pub image: Image,
    /// Object indices in paste order (far to near).
    pub z_order: Vec<usize>,
    /// Number of scene and object points removed as occluded.
    pub removed: usize,
}

/// Pastes objects far to near by box-center depth (ties: later index on
/// top). Crops are clipped to the image. A point is dropped when its pixel
/// is covered by the crop of a different object whose depth is smaller
/// than the point's own depth.
pub fn gt_sample_paste(
    scene_points: &PointCloud,
    scene_image: &Image,
    objects: &[SampledObject],
    camera: &Camera,
) -> PasteResult {
    let mut z_order: Vec<usize> = (0..objects.len()).collect();
    z_order.sort_by(|&a, &b| objects[b].depth.total_cmp(&objects[a].depth).then(a.cmp(&b)));

    let (w, h) = (scene_image.width, scene_image.height);
    let mut image = scene_image.clone();
    // Per-pixel owner of the topmost crop.
    let mut owner: Vec<Option<usize>> = vec![None; w * h];
    for &o in &z_order {
        let obj = &objects[o];
        for cv in 0..obj.crop.height {
            for cu in 0..obj.crop.width {
                let (u, v) = (obj.box2d.u0 + cu, obj.box2d.v0 + cv);
                if u >= w || v >= h || !obj.box2d.contains(u, v) {
                    continue;
                }
                image.pixel_mut(u, v).copy_from_slice(obj.crop.pixel(cu, cv));
                owner[v * w + u] = Some(o);
            }
        }
    }

    let occluded = |p: &[f64; 4], own: Option<usize>| -> bool {
        let xyz = PointCloud::xyz(p);
        let Some((u, v)) = camera.pixel_of(xyz) else {
            return false;
        };
        let (_, _, depth) = camera.project_point(xyz);
        match owner[v * w + u] {
            Some(o) if Some(o) != own => objects[o].depth < depth,
            _ => false,
        }
    };

    let mut removed = 0;
    let mut points = Vec::with_capacity(scene_points.len());
    for p in &scene_points.points {
        if occluded(p, None) {
            removed += 1;
        } else {
            points.push(*p);
        }
    }
    for (i, obj) in objects.iter().enumerate() {
        for p in &obj.points.points {
            if occluded(p, Some(i)) {
                removed += 1;
            } else {
                points.push(*p);
            }
        }
    }
    PasteResult {
        points: PointCloud::new(points),
        image,
        z_order,
        removed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::forward(40.0, 64, 48)
    }

    fn solid(w: usize, h: usize, value: f32) -> Image {
        Image::from_fn(w, h, 1, |_, _, _| value)
    }

    fn object(center: [f64; 3], size: [f64; 3], value: f32) -> SampledObject {
        let box3d = Box3D { center, size, yaw: 0.0 };
        let cam = cam();
        let box2d = box3d.project(&cam).unwrap();
        // Points on the camera-facing side of the box.
        let mut pts = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                pts.push([
                    center[0] - size[0] / 2.0 + 0.01,
                    center[1] + (i as f64 / 3.0 - 0.5) * size[1] * 0.9,
                    center[2] + (j as f64 / 3.0 - 0.5) * size[2] * 0.9,
                    value as f64,
                ]);
            }
        }
        SampledObject {
            class: "Car".into(),
            points: PointCloud::new(pts),
            box3d,
            crop: solid(box2d.width(), box2d.height(), value),
            box2d,
            depth: cam.project_point(center).2,
        }
    }

    #[test]
    fn zero_objects_leave_scene_unchanged() {
        let pc = PointCloud::new(vec![[10.0, 0.0, 0.0, 1.0]]);
        let img = solid(64, 48, 0.25);
        let r = gt_sample_paste(&pc, &img, &[], &cam());
        assert_eq!(r.points, pc);
        assert_eq!(r.image, img);
        assert!(r.z_order.is_empty());
    }

    #[test]
    fn disjoint_object_appends_points() {
        // Scene points far to the left; the object sits right of center.
        let pc = PointCloud::new(vec![[10.0, 4.0, 0.0, 1.0], [12.0, 5.0, 0.5, 1.0]]);
        let obj = object([8.0, -2.0, 0.0], [2.0, 1.5, 1.5], 9.0);
        let r = gt_sample_paste(&pc, &solid(64, 48, 0.0), std::slice::from_ref(&obj), &cam());
        assert_eq!(r.points.len(), pc.len() + obj.points.len());
        assert_eq!(r.removed, 0);
    }

    #[test]
    fn overlapping_crops_follow_z_buffer() {
        let near = object([5.0, 0.0, 0.0], [1.0, 1.6, 1.4], 1.0);
        let far = object([10.0, 0.5, 0.2], [1.0, 3.0, 2.4], 2.0);
        let objects = vec![near.clone(), far.clone()];
        let bg = solid(64, 48, 0.0);
        let r = gt_sample_paste(&PointCloud::default(), &bg, &objects, &cam());
        assert_eq!(r.z_order, vec![1, 0]);

        // Per-pixel z-buffer oracle.
        for v in 0..48 {
            for u in 0..64 {
                let mut best: Option<(f64, f32)> = None;
                for o in &objects {
                    if o.box2d.contains(u, v) && best.is_none_or(|(d, _)| o.depth < d) {
                        best = Some((o.depth, o.crop.pixel(u - o.box2d.u0, v - o.box2d.v0)[0]));
                    }
                }
                let want = best.map_or(0.0, |(_, val)| val);
                assert_eq!(r.image.pixel(u, v)[0], want, "pixel ({u},{v})");
            }
        }
        // Far points under the near crop are removed; the rest survive.
        let cam = cam();
        let under_near = far
            .points
            .points
            .iter()
            .filter(|p| {
                cam.pixel_of(PointCloud::xyz(p))
                    .is_some_and(|(u, v)| near.box2d.contains(u, v))
            })
            .count();
        assert!(under_near > 0);
        assert_eq!(r.removed, under_near);
        assert_eq!(r.points.len(), near.points.len() + far.points.len() - under_near);
        assert!(near.points.points.iter().all(|p| r.points.points.contains(p)));
    }

    #[test]
    fn crop_outside_image_is_clipped() {
        let mut obj = object([8.0, 0.0, 0.0], [1.0, 1.0, 1.0], 3.0);
        obj.box2d = PixelBox {
            u0: 60,
            v0: 44,
            u1: 60 + obj.crop.width,
            v1: 44 + obj.crop.height,
        };
        let r = gt_sample_paste(&PointCloud::default(), &solid(64, 48, 0.0), &[obj], &cam());
        assert_eq!(r.image.pixel(63, 47)[0], 3.0);
        assert_eq!(r.image.pixel(59, 47)[0], 0.0);
    }

    #[test]
    fn box_contains_rotated_points() {
        let b = Box3D {
            center: [1.0, 1.0, 0.0],
            size: [4.0, 1.0, 1.0],
            yaw: std::f64::consts::FRAC_PI_2,
        };
        assert!(b.contains([1.0, 2.9, 0.0]));
        assert!(!b.contains([2.9, 1.0, 0.0]));
        for c in b.corners() {
            assert!(b.contains(c));
        }
    }
}
