use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::Config;
use super::model::Model;
use super::report::{RunReport, StageTiming};
use super::scene::{box_to_cells, FeatureEncoder, Scene};
use crate::augment::{apply_flip, apply_rescale, apply_rotate, AugmentRecord, Image, ImageOpMode, PixelBox};
use crate::exec::Exec;
use crate::fusion::{cell_feature, fuse_frame, gaussian_target_3d, ray_loss, score_ray, Target3D};
use crate::geometry::{
    compose_projection, voxelize, GridSpec, PointCloud, Projection, ProjectionTransform, VoxelField, VoxelizeStats,
};
use crate::numerics::{conv2d_forward, sigmoid, Tensor};
use crate::ray::{construct_rays, mark_anchors, Ray};
use crate::sampler::{
    gaussian_target_2d, heuristic_sample, importance_sample, partition_windows, sampler_loss, PixelSampleSet, Target2D,
    WindowPartition,
};
use crate::{Error, Result};

const AUGMENT_STREAM: u64 = 0x6175_6731;
const SAMPLE_STREAM: u64 = 0x7361_6d70;

/// One augmented, voxelized frame with everything the heads consume.
#[derive(Debug, Clone)]
pub struct Frame {
    pub grid: GridSpec,
    pub vt: ProjectionTransform,
    pub record: AugmentRecord,
    pub points: PointCloud,
    pub image: Image,
    pub field: VoxelField,
    pub voxelize: VoxelizeStats,
    /// `[C, H_f, W_f]` image features.
    pub features: Tensor,
    /// Object boxes in feature cells, after augmentation.
    pub boxes: Vec<PixelBox>,
    pub target2d: Target2D,
    pub partition: WindowPartition,
}

fn warp_box(b: &PixelBox, rec: &AugmentRecord, w: usize, h: usize) -> Option<PixelBox> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (x, y) in [(b.u0, b.v0), (b.u1, b.v0), (b.u0, b.v1), (b.u1, b.v1)] {
        let (x2, y2) = rec.map_pixel(x as f64, y as f64);
        lo = [lo[0].min(x2), lo[1].min(y2)];
        hi = [hi[0].max(x2), hi[1].max(y2)];
    }
    let out = PixelBox {
        u0: lo[0].floor().clamp(0.0, w as f64) as usize,
        v0: lo[1].floor().clamp(0.0, h as f64) as usize,
        u1: hi[0].ceil().clamp(0.0, w as f64) as usize,
        v1: hi[1].ceil().clamp(0.0, h as f64) as usize,
    };
    (out.width() > 0 && out.height() > 0).then_some(out)
}

/// Applies the configured augmentation (rescale, then flip, then rotate),
/// voxelizes, encodes features and builds the sampler target.
pub fn prepare_frame(scene: &Scene, cfg: &Config, encoder: &FeatureEncoder) -> Result<Frame> {
    let aug = &cfg.augment;
    let camera = &scene.camera;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AUGMENT_STREAM);
    let (mut points, mut image, mut record) = (scene.points.clone(), scene.image.clone(), AugmentRecord::identity());
    if aug.rescale != 1.0 {
        let (p, i, r) = apply_rescale(&points, &image, aug.rescale, camera, aug.image_ops, &mut rng)?;
        (points, image, record) = (p, i, record.then(&r));
    }
    if aug.flip {
        let (p, i, r) = apply_flip(&points, &image, camera, aug.image_ops);
        (points, image, record) = (p, i, record.then(&r));
    }
    if aug.rotate != 0.0 {
        let (p, r) = apply_rotate(&points, aug.rotate)?;
        (points, record) = (p, record.then(&r));
    }

    let grid = scene.grid;
    let (field, stats) = voxelize(&points, &grid);
    let vt = compose_projection(&grid, camera, &record, cfg.camera.stride)?;
    let features = encoder.encode(&image);
    let (hf, wf) = vt.feature_dims();
    if features.shape()[1..] != [hf, wf] {
        return Err(Error::Shape {
            op: "feature map",
            expected: vec![encoder.channels, hf, wf],
            actual: features.shape().to_vec(),
        });
    }
    let image_boxes: Vec<PixelBox> = if aug.image_ops == ImageOpMode::Reproject {
        scene.boxes2d.clone()
    } else {
        scene
            .boxes2d
            .iter()
            .filter_map(|b| warp_box(b, &record, camera.width, camera.height))
            .collect()
    };
    let boxes: Vec<PixelBox> = image_boxes.iter().map(|b| box_to_cells(b, cfg.camera.stride)).collect();
    let target2d = gaussian_target_2d(&boxes, (hf, wf));

    let cells: Vec<(usize, usize)> = points
        .points
        .iter()
        .filter_map(|p| {
            let c = [0, 1, 2].map(|a| (p[a] - grid.origin[a]) / grid.voxel_size[a]);
            match vt.project_coords(c) {
                Projection::Cell { u, v } => Some((u, v)),
                _ => None,
            }
        })
        .collect();
    let partition = partition_windows((hf, wf), &cells, cfg.sampler.window)?;
    Ok(Frame {
        grid,
        vt,
        record,
        points,
        image,
        field,
        voxelize: stats,
        features,
        boxes,
        target2d,
        partition,
    })
}

/// Sampler activations `[1, H_f, W_f]`.
pub fn sampler_scores(frame: &Frame, model: &Model) -> Result<Tensor> {
    let mut act = conv2d_forward(&frame.features, &model.head, &model.store)?;
    act.data_mut().iter_mut().for_each(|x| *x = sigmoid(*x));
    Ok(act)
}

pub fn sample_pixels(frame: &Frame, cfg: &Config, model: &Model, seed: u64) -> Result<PixelSampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SAMPLE_STREAM);
    match cfg.sampler.mode.heuristic() {
        Some(mode) => Ok(heuristic_sample(&frame.partition, mode, cfg.sampler.n, &mut rng)),
        None => importance_sample(
            &frame.features,
            &model.head,
            &model.store,
            &frame.partition,
            cfg.sampler.n,
            &mut rng,
        ),
    }
}

/// Rays for the sampled cells with anchors marked from the frame's
/// voxelized points.
pub fn cast_rays(frame: &Frame, pixels: &[(usize, usize)], exec: Exec) -> Result<Vec<Ray>> {
    Ok(construct_rays(&frame.vt, &frame.grid, pixels, exec)?
        .into_iter()
        .map(|r| mark_anchors(r, &frame.field))
        .collect())
}

/// Current scores of every ray voxel under view 0's coordinate MLP.
pub fn ray_scores(frame: &Frame, rays: &[Ray], model: &Model, exec: Exec) -> Result<Vec<Vec<f64>>> {
    let mlp = model.fusion.embed(0)?;
    exec.map(rays, |r| {
        let feat = cell_feature(&frame.features, r.pixel)?;
        Ok(score_ray(r, &frame.grid, &feat, mlp, &model.fusion.fuse, &model.store)?.weights)
    })
    .into_iter()
    .collect()
}

pub fn ray_targets(rays: &[Ray], cfg: &Config) -> Vec<Target3D> {
    rays.iter()
        .map(|r| gaussian_target_3d(r, cfg.fusion.radius, cfg.fusion.sigma()))
        .collect()
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        stage: stage.to_string(),
        ms: start.elapsed().as_secs_f64() * 1e3,
    });
    Ok(out)
}

/// Augment, voxelize, sample, cast rays, fuse and evaluate both losses.
pub fn run_fusion_pass(scene: &Scene, cfg: &Config, model: &Model, exec: Exec) -> Result<(VoxelField, RunReport)> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let encoder = FeatureEncoder::from_config(cfg);
    let frame = timed(&mut timings, "augment", || prepare_frame(scene, cfg, &encoder))?;
    let samples = timed(&mut timings, "sample", || sample_pixels(&frame, cfg, model, cfg.seed))?;
    let rays = timed(&mut timings, "rays", || cast_rays(&frame, &samples.pixels, exec))?;
    let (fused, stats) = timed(&mut timings, "fuse", || {
        fuse_frame(
            &frame.field,
            &rays,
            &frame.features,
            &model.fusion,
            0,
            &model.store,
            &cfg.fusion,
            !cfg.inference,
            exec,
        )
    })?;
    let (s_loss, r_loss) = timed(&mut timings, "loss", || {
        let s = sampler_loss(&sampler_scores(&frame, model)?, &frame.target2d)?;
        let r = if rays.is_empty() {
            None
        } else {
            let w = ray_scores(&frame, &rays, model, exec)?;
            Some(ray_loss(
                &w,
                &ray_targets(&rays, cfg),
                cfg.fusion.loss_weight,
                cfg.fusion.focal,
            )?)
        };
        Ok((s, r))
    })?;

    let report = RunReport {
        seed: cfg.seed,
        mode: format!("{:?}", cfg.fusion.mode),
        sampler: format!("{:?}", cfg.sampler.mode),
        points: frame.points.len(),
        points_dropped: frame.voxelize.dropped,
        fit_residual: frame.record.fit_residual,
        sampled_pixels: samples.len(),
        rays: stats.rays,
        ray_voxels: stats.ray_voxels,
        anchors: rays.iter().map(|r| r.anchors.len()).sum(),
        budget: stats.budget,
        fused: stats.fused,
        occupancy_before: stats.occupied_before,
        occupancy_after: stats.occupied_after,
        sampler_loss: s_loss,
        ray_loss: r_loss,
        total_loss: s_loss + r_loss.unwrap_or(0.0),
        field_digest: fused.digest(),
        grad_check: None,
        timings,
    };
    Ok((fused, report))
}
