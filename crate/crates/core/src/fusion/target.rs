use serde::{Deserialize, Serialize};

use super::fuse::gaussian_weight;
use crate::geometry::GridSpec;
use crate::numerics::{kernels, FocalParams, Graph, LossKind, Mlp, NodeId, ParamStore, Tensor};
use crate::ray::Ray;
use crate::{Error, Result};

/// Per-voxel score targets along one ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target3D {
    pub values: Vec<f64>,
}

/// Target for each ray voxel: the largest Gaussian weight over anchors
/// within `radius`, 0 if no anchor is that close (or there are none).
pub fn gaussian_target_3d(ray: &Ray, radius: f64, sigma: f64) -> Target3D {
    let values = ray
        .voxels
        .iter()
        .map(|&v| {
            ray.anchor_voxels()
                .map(|a| gaussian_weight(a.distance(v), radius, sigma))
                .fold(0.0, f64::max)
        })
        .collect();
    Target3D { values }
}

fn check_rays(weights: &[Vec<f64>], targets: &[Target3D]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::EmptyRaySet);
    }
    if weights.len() != targets.len() {
        return Err(Error::Shape {
            op: "ray_loss",
            expected: vec![weights.len()],
            actual: vec![targets.len()],
        });
    }
    for (w, t) in weights.iter().zip(targets) {
        if w.len() != t.values.len() {
            return Err(Error::Shape {
                op: "ray_loss",
                expected: vec![w.len()],
                actual: vec![t.values.len()],
            });
        }
    }
    Ok(())
}

/// `loss_weight / m * sum over rays of the mean focal loss along the ray`,
/// with `m` the number of rays. An empty ray adds nothing.
pub fn ray_loss(weights: &[Vec<f64>], targets: &[Target3D], loss_weight: f64, focal: FocalParams) -> Result<f64> {
    check_rays(weights, targets)?;
    let m = weights.len() as f64;
    let total: f64 = weights
        .iter()
        .zip(targets)
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, t)| {
            w.iter()
                .zip(&t.values)
                .map(|(&p, &y)| kernels::focal_term(p, y, focal.gamma, focal.alpha))
                .sum::<f64>()
                / w.len() as f64
        })
        .sum();
    Ok(loss_weight * total / m)
}

/// One ray's contribution to the tape loss.
pub struct RayLossTerm<'a> {
    pub ray: &'a Ray,
    /// Image feature of the ray's cell (a constant on the tape).
    pub image_feat: &'a [f64],
    pub target: &'a Target3D,
}

/// Tape version of [`ray_loss`] through one coordinate MLP. All ray voxels
/// go through the MLP as one batch; image features enter as constants.
pub fn ray_loss_node(
    g: &mut Graph,
    store: &ParamStore,
    grid: &GridSpec,
    mlp: &Mlp,
    terms: &[RayLossTerm<'_>],
    loss_weight: f64,
    focal: FocalParams,
) -> Result<NodeId> {
    if terms.is_empty() {
        return Err(Error::EmptyRaySet);
    }
    let m = terms.len() as f64;
    let d = mlp.d_out();
    let (mut coords, mut feats, mut target, mut weight) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in terms {
        let n = t.ray.len();
        if t.target.values.len() != n || t.image_feat.len() != d {
            return Err(Error::Shape {
                op: "ray_loss_node",
                expected: vec![n, d],
                actual: vec![t.target.values.len(), t.image_feat.len()],
            });
        }
        for (j, &v) in t.ray.voxels.iter().enumerate() {
            coords.extend(grid.normalized(v));
            feats.extend_from_slice(t.image_feat);
            target.push(t.target.values[j]);
            weight.push(loss_weight / (m * n as f64));
        }
    }
    let rows = target.len();
    if rows == 0 {
        return Ok(g.input(Tensor::scalar(0.0)));
    }
    let x = g.input(Tensor::new(vec![rows, 3], coords)?);
    let emb = mlp.forward(g, store, x)?;
    let logits = g.row_dot(emb, &Tensor::new(vec![rows, d], feats)?)?;
    let p = g.sigmoid(logits);
    g.weighted_loss(
        p,
        &target,
        &weight,
        LossKind::Focal {
            gamma: focal.gamma,
            alpha: focal.alpha,
        },
    )
}
