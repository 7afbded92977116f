use serde::{Deserialize, Serialize};

use crate::augment::PixelBox;
use crate::numerics::{Graph, LossKind, NodeId, Tensor};
use crate::Result;

/// Weight of the sampler BCE term in the fusion objective.
pub const SAMPLER_LOSS_WEIGHT: f64 = 2.0;

/// Per-cell sampler supervision on the feature grid, row-major `H x W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target2D {
    pub height: usize,
    pub width: usize,
    pub map: Vec<f64>,
}

impl Target2D {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.map[v * self.width + u]
    }

    /// As a `[1, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.height, self.width], self.map.clone()).expect("target shape")
    }

    /// Center cell of a box: the lower middle cell along each axis.
    pub fn center(b: &PixelBox) -> (usize, usize) {
        ((b.u0 + b.u1 - 1) / 2, (b.v0 + b.v1 - 1) / 2)
    }

    /// Spread of a box's Gaussian: one sixth of its diagonal, in cells.
    pub fn sigma(b: &PixelBox) -> f64 {
        (b.width() as f64).hypot(b.height() as f64) / 6.0
    }
}

/// Gaussian bumps inside each box (peak 1 at the center cell), combined by
/// pointwise max; zero outside every box. Boxes are in feature cells and
/// are clipped to `(H, W)`; empty boxes are skipped.
pub fn gaussian_target_2d(boxes: &[PixelBox], dims: (usize, usize)) -> Target2D {
    let (h, w) = dims;
    let mut map = vec![0.0f64; h * w];
    for b in boxes {
        if b.width() == 0 || b.height() == 0 {
            log::warn!("skipping zero-area box {b:?}");
            continue;
        }
        let (cu, cv) = Target2D::center(b);
        let s2 = 2.0 * Target2D::sigma(b).powi(2);
        for v in b.v0..b.v1.min(h) {
            for u in b.u0..b.u1.min(w) {
                let du = u as f64 - cu as f64;
                let dv = v as f64 - cv as f64;
                let g = (-(du * du + dv * dv) / s2).exp();
                let cell = &mut map[v * w + u];
                *cell = (*cell).max(g);
            }
        }
    }
    Target2D {
        height: h,
        width: w,
        map,
    }
}

/// Weighted BCE between sampler activations `[1, H, W]` and the target.
pub fn sampler_loss(head_output: &Tensor, target: &Target2D) -> Result<f64> {
    Ok(SAMPLER_LOSS_WEIGHT * crate::numerics::bce_loss(head_output, &target.to_tensor())?)
}

/// Tape version of [`sampler_loss`]; `pred` holds activations.
pub fn sampler_loss_node(g: &mut Graph, pred: NodeId, target: &Target2D) -> Result<NodeId> {
    let l = g.mean_loss(pred, &target.to_tensor(), LossKind::Bce)?;
    Ok(g.scale(l, SAMPLER_LOSS_WEIGHT))
}
