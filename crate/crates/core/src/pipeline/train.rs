use serde::{Deserialize, Serialize};

use super::config::Config;
use super::model::Model;
use super::run::{cast_rays, prepare_frame, ray_scores, ray_targets, Frame};
use super::scene::{gen_scene, FeatureEncoder, SceneSpec};
use crate::exec::Exec;
use crate::fusion::{cell_feature, ray_loss_node, RayLossTerm, Target3D};
use crate::numerics::{finite_diff_grad_check, GradCheckReport, Graph, NodeId, ParamStore};
use crate::ray::Ray;
use crate::sampler::{heuristic_sample, sampler_loss_node, HeuristicMode};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A frame with a fixed ray sample, its targets and cell features.
#[derive(Debug, Clone)]
pub struct TrainFrame {
    pub frame: Frame,
    pub rays: Vec<Ray>,
    pub feats: Vec<Vec<f64>>,
    pub targets: Vec<Target3D>,
}

/// Builds the frame and draws its rays once, uniformly over kept windows,
/// so the objective stays fixed while the sampler head trains.
pub fn build_train_frame(cfg: &Config, seed: u64, exec: Exec) -> Result<TrainFrame> {
    let mut scene_cfg = cfg.clone();
    scene_cfg.seed = seed;
    let scene = gen_scene(&SceneSpec::from_config(&scene_cfg)?).map_err(|e| e.in_stage("scene"))?;
    let frame = prepare_frame(&scene, &scene_cfg, &FeatureEncoder::from_config(cfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = heuristic_sample(&frame.partition, HeuristicMode::Uniformity, cfg.sampler.n, &mut rng).pixels;
    let rays = cast_rays(&frame, &pixels, exec)?;
    let feats = rays
        .iter()
        .map(|r| cell_feature(&frame.features, r.pixel))
        .collect::<Result<_>>()?;
    let targets = ray_targets(&rays, cfg);
    Ok(TrainFrame {
        frame,
        rays,
        feats,
        targets,
    })
}

/// `cfg.train.scenes` frames seeded `seed, seed + 1, ...`.
pub fn build_train_set(cfg: &Config, exec: Exec) -> Result<Vec<TrainFrame>> {
    (0..cfg.train.scenes as u64)
        .map(|i| build_train_frame(cfg, cfg.seed.wrapping_add(i), exec))
        .collect()
}

/// Records the fusion objective averaged over frames: weighted sampler BCE
/// plus weighted ray focal loss.
pub fn vff_loss_node(
    g: &mut Graph,
    store: &ParamStore,
    model: &Model,
    frames: &[TrainFrame],
    cfg: &Config,
) -> Result<NodeId> {
    if frames.is_empty() {
        return Err(Error::Config("no training frames".into()));
    }
    let mlp = model.fusion.embed(0)?;
    let mut total: Option<NodeId> = None;
    for tf in frames {
        let x = g.input(tf.frame.features.clone());
        let logits = model.head.forward(g, store, x)?;
        let p = g.sigmoid(logits);
        let mut loss = sampler_loss_node(g, p, &tf.frame.target2d)?;
        if !tf.rays.is_empty() {
            let terms: Vec<RayLossTerm> = (0..tf.rays.len())
                .map(|i| RayLossTerm {
                    ray: &tf.rays[i],
                    image_feat: &tf.feats[i],
                    target: &tf.targets[i],
                })
                .collect();
            let r = ray_loss_node(
                g,
                store,
                &tf.frame.grid,
                mlp,
                &terms,
                cfg.fusion.loss_weight,
                cfg.fusion.focal,
            )?;
            loss = g.add(loss, r)?;
        }
        total = Some(match total {
            Some(t) => g.add(t, loss)?,
            None => loss,
        });
    }
    let total = total.expect("at least one frame");
    Ok(g.scale(total, 1.0 / frames.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub lr: f64,
    /// Loss before each step, then the final loss.
    pub losses: Vec<f64>,
    /// Mean score at anchor voxels after training.
    pub anchor_score: f64,
    /// Mean score at ray voxels farther than the radius from every anchor.
    pub far_score: f64,
}

impl TrainReport {
    /// Averages of every `window` consecutive losses.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        self.losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect()
    }
}

/// Mean ray score at anchors and at voxels beyond the radius of every
/// anchor, over all frames.
pub fn score_split(frames: &[TrainFrame], model: &Model, cfg: &Config, exec: Exec) -> Result<(f64, f64)> {
    let (mut a, mut na, mut f, mut nf) = (0.0, 0usize, 0.0, 0usize);
    for tf in frames {
        let w = ray_scores(&tf.frame, &tf.rays, model, exec)?;
        for (ray, ws) in tf.rays.iter().zip(&w) {
            for (j, &v) in ray.voxels.iter().enumerate() {
                if ray.anchors.contains(&j) {
                    a += ws[j];
                    na += 1;
                } else if ray.anchor_voxels().all(|an| an.distance(v) > cfg.fusion.radius) {
                    f += ws[j];
                    nf += 1;
                }
            }
        }
    }
    Ok((a / na.max(1) as f64, f / nf.max(1) as f64))
}

/// Plain gradient descent on every model parameter.
pub fn train_heads(
    frames: &[TrainFrame],
    model: &mut Model,
    cfg: &Config,
    steps: usize,
    lr: f64,
    exec: Exec,
) -> Result<TrainReport> {
    if steps == 0 {
        return Err(Error::Config("train.steps must be at least 1".into()));
    }
    let mut losses = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut g = Graph::new();
        let loss = vff_loss_node(&mut g, &model.store, model, frames, cfg)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Diverged { step });
        }
        losses.push(value);
        if step == steps {
            break;
        }
        model.store.zero_grad();
        g.backward(loss, &mut model.store)?;
        model.store.sgd_step(lr);
        log::debug!("step {step}: loss {value:.6}");
    }
    let (anchor_score, far_score) = score_split(frames, model, cfg, exec)?;
    Ok(TrainReport {
        steps,
        lr,
        losses,
        anchor_score,
        far_score,
    })
}

/// Finite-difference check of the full objective on a small scene: two
/// boxes and 64 object points.
pub fn grad_check_vff(cfg: &Config, n_coords: usize, exec: Exec) -> Result<GradCheckReport> {
    let mut toy = cfg.clone();
    toy.scene.objects = 2;
    toy.scene.points_per_object = 32;
    toy.scene.ground_points = 0;
    let frames = vec![build_train_frame(&toy, toy.seed, exec)?];
    let model = Model::new(toy.scene.channels, 4, 1, toy.seed);
    finite_diff_grad_check(
        |g, store| vff_loss_node(g, store, &model, &frames, &toy),
        &model.store,
        1e-5,
        n_coords,
        toy.seed,
    )
}
