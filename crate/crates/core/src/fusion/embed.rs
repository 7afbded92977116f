use crate::geometry::{GridSpec, VoxelIndex};
use crate::numerics::{sigmoid, Dense, Mlp, ParamStore, Tensor};
use crate::ray::Ray;
use crate::{Error, Result};

/// Feature vector of cell `(u, v)` in a `[C, H, W]` map.
pub fn cell_feature(map: &Tensor, (u, v): (usize, usize)) -> Result<Vec<f64>> {
    let (c, h, w) = map.chw()?;
    if u >= w || v >= h {
        return Err(Error::Config(format!(
            "cell ({u}, {v}) outside the {w}x{h} feature map"
        )));
    }
    Ok((0..c).map(|k| map.data()[(k * h + v) * w + u]).collect())
}

/// Coordinate embedding of a voxel: the MLP applied to its grid-normalized
/// position in `[0, 1]^3`.
pub fn coord_embed(v: VoxelIndex, grid: &GridSpec, mlp: &Mlp, store: &ParamStore) -> Result<Vec<f64>> {
    Ok(crate::numerics::mlp_forward(&Tensor::vector(grid.normalized(v).to_vec()), mlp, store)?.into_data())
}

/// Sigmoid of the inner product of an image feature and an embedding.
pub fn ray_weight(image_feat: &[f64], embed: &[f64]) -> Result<f64> {
    if image_feat.len() != embed.len() {
        return Err(Error::Shape {
            op: "ray_weight",
            expected: vec![image_feat.len()],
            actual: vec![embed.len()],
        });
    }
    Ok(sigmoid(image_feat.iter().zip(embed).map(|(a, b)| a * b).sum()))
}

/// The fusion layer on `[image_feat, embed]`.
pub fn fused_feature(fuse: &Dense, store: &ParamStore, image_feat: &[f64], embed: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(image_feat.len() + embed.len());
    x.extend_from_slice(image_feat);
    x.extend_from_slice(embed);
    fuse.apply(store, &x, 1)
}

/// Per-voxel scores and fused features of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRay {
    /// Score per ray voxel, in `(0, 1)`.
    pub weights: Vec<f64>,
    /// Fusion-layer output per ray voxel.
    pub fused: Vec<Vec<f64>>,
}

/// Embeds every voxel of the ray (one batched MLP pass), scores it against
/// the image feature and evaluates the fusion layer.
pub fn score_ray(
    ray: &Ray,
    grid: &GridSpec,
    image_feat: &[f64],
    mlp: &Mlp,
    fuse: &Dense,
    store: &ParamStore,
) -> Result<ScoredRay> {
    let n = ray.len();
    if n == 0 {
        return Ok(ScoredRay {
            weights: Vec::new(),
            fused: Vec::new(),
        });
    }
    let coords: Vec<f64> = ray.voxels.iter().flat_map(|&v| grid.normalized(v)).collect();
    let emb = crate::numerics::mlp_forward(&Tensor::new(vec![n, 3], coords)?, mlp, store)?;
    let d = mlp.d_out();
    let mut weights = Vec::with_capacity(n);
    let mut fused = Vec::with_capacity(n);
    for row in emb.data().chunks_exact(d) {
        weights.push(ray_weight(image_feat, row)?);
        fused.push(fused_feature(fuse, store, image_feat, row));
    }
    Ok(ScoredRay { weights, fused })
}
