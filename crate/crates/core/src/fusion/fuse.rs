use serde::{Deserialize, Serialize};

use super::embed::{cell_feature, fused_feature, score_ray, ScoredRay};
use super::{FusionConfig, FusionMode, FusionModel};
use crate::exec::Exec;
use crate::geometry::{VoxelField, VoxelIndex};
use crate::numerics::{mlp_forward, ParamStore, Tensor};
use crate::ray::Ray;
use crate::{Error, Result};

/// `exp(-d^2 / (2 sigma^2))` within `radius`, 0 beyond it. At `d = 0` the
/// weight is 1 for any sigma, including a zero radius.
pub fn gaussian_weight(d: f64, radius: f64, sigma: f64) -> f64 {
    if d > radius {
        0.0
    } else if d == 0.0 {
        1.0
    } else {
        (-(d * d) / (2.0 * sigma * sigma)).exp()
    }
}

/// Picks the candidates to fuse: the `ceil(top_fraction * occupied)`
/// highest scores, ties broken by ascending voxel index, then by candidate
/// order. With `threshold` set, only scores above it qualify. Returns
/// candidate positions in selection order.
pub fn select_top(
    candidates: &[(VoxelIndex, f64)],
    occupied: usize,
    top_fraction: f64,
    threshold: Option<f64>,
) -> Vec<usize> {
    let k = (top_fraction * occupied as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..candidates.len())
        .filter(|&i| threshold.is_none_or(|t| candidates[i].1 > t))
        .collect();
    order.sort_by(|&a, &b| {
        let (va, wa) = candidates[a];
        let (vb, wb) = candidates[b];
        wb.total_cmp(&wa).then(va.cmp(&vb)).then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Adds `weight * fused` for each selected ray voxel. Voxels with zero
/// weight are skipped, so they stay bitwise untouched.
pub fn fuse_ray(field: &mut VoxelField, ray: &Ray, scored: &ScoredRay, selected: &[bool]) -> usize {
    let mut written = 0;
    for (j, &v) in ray.voxels.iter().enumerate() {
        let w = scored.weights[j];
        if !selected[j] || w == 0.0 {
            continue;
        }
        let delta: Vec<f64> = scored.fused[j].iter().map(|f| w * f).collect();
        field.add(v, &delta);
        written += 1;
    }
    written
}

fn fused_at(
    ray: &Ray,
    positions: &[usize],
    image_feat: &[f64],
    model: &FusionModel,
    view: usize,
    store: &ParamStore,
    field: &VoxelField,
) -> Result<Vec<Vec<f64>>> {
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let mlp = model.embed(view)?;
    let coords: Vec<f64> = positions
        .iter()
        .flat_map(|&j| field.grid().normalized(ray.voxels[j]))
        .collect();
    let emb = mlp_forward(&Tensor::new(vec![positions.len(), 3], coords)?, mlp, store)?;
    Ok(emb
        .data()
        .chunks_exact(mlp.d_out())
        .map(|e| fused_feature(&model.fuse, store, image_feat, e))
        .collect())
}

/// Adds the fused feature to every anchor of the ray with weight 1.
pub fn fuse_single(
    field: &mut VoxelField,
    ray: &Ray,
    image_feat: &[f64],
    model: &FusionModel,
    view: usize,
    store: &ParamStore,
) -> Result<usize> {
    let fused = fused_at(ray, &ray.anchors, image_feat, model, view, store, field)?;
    for (&j, f) in ray.anchors.iter().zip(&fused) {
        field.add(ray.voxels[j], f);
    }
    Ok(ray.anchors.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalMode {
    Aggregate,
    Propagate,
}

/// Gaussian-ball fusion around anchors. Aggregate adds to each anchor the
/// weighted sum of fused features of ray voxels within `radius` of it;
/// propagate adds to each ray voxel within `radius` of some anchor the
/// weighted sum of those anchors' fused features. Voxels outside every
/// ball are untouched. All increments are computed before any is applied.
#[allow(clippy::too_many_arguments)]
pub fn fuse_local(
    field: &mut VoxelField,
    ray: &Ray,
    image_feat: &[f64],
    model: &FusionModel,
    view: usize,
    store: &ParamStore,
    mode: LocalMode,
    radius: f64,
    sigma: f64,
) -> Result<usize> {
    if !(radius >= 0.0) {
        return Err(Error::OutOfRange {
            name: "radius",
            value: radius,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let (sources, sinks): (Vec<usize>, Vec<usize>) = match mode {
        LocalMode::Aggregate => ((0..ray.len()).collect(), ray.anchors.clone()),
        LocalMode::Propagate => (ray.anchors.clone(), (0..ray.len()).collect()),
    };
    let near = |a: usize, b: usize| ray.voxels[a].distance(ray.voxels[b]) <= radius;
    let used: Vec<usize> = sources
        .iter()
        .copied()
        .filter(|&s| sinks.iter().any(|&t| near(s, t)))
        .collect();
    let fused = fused_at(ray, &used, image_feat, model, view, store, field)?;
    let mut updates = Vec::new();
    for &t in &sinks {
        let mut acc: Option<Vec<f64>> = None;
        for (&s, f) in used.iter().zip(&fused) {
            let d = ray.voxels[s].distance(ray.voxels[t]);
            if d > radius {
                continue;
            }
            let g = gaussian_weight(d, radius, sigma);
            let acc = acc.get_or_insert_with(|| vec![0.0; f.len()]);
            for (a, x) in acc.iter_mut().zip(f) {
                *a += g * x;
            }
        }
        if let Some(delta) = acc {
            updates.push((ray.voxels[t], delta));
        }
    }
    let n = updates.len();
    for (v, delta) in updates {
        field.add(v, &delta);
    }
    Ok(n)
}

/// Counters from one fusion pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    pub rays: usize,
    pub ray_voxels: usize,
    /// Budget from the top-fraction rule (ray-wise only).
    pub budget: usize,
    /// Voxel updates written.
    pub fused: usize,
    pub occupied_before: usize,
    pub occupied_after: usize,
}

/// Fuses all rays of one frame. `image` is the `[C, H, W]` feature map the
/// rays were cast from and `rays` must already carry anchors. Scoring runs
/// under `exec`; the field is then written in ascending (cell, ray) order,
/// so the result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn fuse_frame(
    field: &VoxelField,
    rays: &[Ray],
    image: &Tensor,
    model: &FusionModel,
    view: usize,
    store: &ParamStore,
    cfg: &FusionConfig,
    training: bool,
    exec: Exec,
) -> Result<(VoxelField, FusionStats)> {
    cfg.validate()?;
    let mut out = field.clone();
    let mut order: Vec<usize> = (0..rays.len()).collect();
    order.sort_by_key(|&i| (rays[i].pixel.1, rays[i].pixel.0, i));
    let mut stats = FusionStats {
        rays: rays.len(),
        ray_voxels: rays.iter().map(Ray::len).sum(),
        occupied_before: field.occupied_count(),
        ..Default::default()
    };
    let feats: Vec<Vec<f64>> = rays
        .iter()
        .map(|r| cell_feature(image, r.pixel))
        .collect::<Result<_>>()?;

    match cfg.mode {
        FusionMode::Single | FusionMode::LocalAggregate | FusionMode::LocalPropagate => {
            for &i in &order {
                stats.fused += match cfg.mode {
                    FusionMode::Single => fuse_single(&mut out, &rays[i], &feats[i], model, view, store)?,
                    FusionMode::LocalAggregate => fuse_local(
                        &mut out,
                        &rays[i],
                        &feats[i],
                        model,
                        view,
                        store,
                        LocalMode::Aggregate,
                        cfg.radius,
                        cfg.sigma(),
                    )?,
                    _ => fuse_local(
                        &mut out,
                        &rays[i],
                        &feats[i],
                        model,
                        view,
                        store,
                        LocalMode::Propagate,
                        cfg.radius,
                        cfg.sigma(),
                    )?,
                };
            }
        }
        FusionMode::RayWise => {
            let mlp = model.embed(view)?;
            let scored: Vec<ScoredRay> = exec
                .map_range(rays.len(), |i| {
                    score_ray(&rays[i], field.grid(), &feats[i], mlp, &model.fuse, store)
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let mut candidates = Vec::with_capacity(stats.ray_voxels);
            let mut owner = Vec::with_capacity(stats.ray_voxels);
            for &i in &order {
                for (j, &v) in rays[i].voxels.iter().enumerate() {
                    candidates.push((v, scored[i].weights[j]));
                    owner.push((i, j));
                }
            }
            let threshold = (!training).then_some(cfg.infer_threshold);
            let chosen = select_top(&candidates, stats.occupied_before, cfg.top_fraction, threshold);
            stats.budget = (cfg.top_fraction * stats.occupied_before as f64).ceil() as usize;
            let mut selected: Vec<Vec<bool>> = rays.iter().map(|r| vec![false; r.len()]).collect();
            for c in chosen {
                let (i, j) = owner[c];
                selected[i][j] = true;
            }
            for &i in &order {
                stats.fused += fuse_ray(&mut out, &rays[i], &scored[i], &selected[i]);
            }
        }
    }
    stats.occupied_after = out.occupied_count();
    Ok((out, stats))
}
