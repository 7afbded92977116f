use rand::Rng;

use super::{PixelSampleSet, WindowPartition};
use crate::numerics::{conv2d_forward, sigmoid, Module2D, ParamStore, Tensor};
use crate::{Error, Result};

/// Cells whose head activation exceeds this are candidates.
pub const SCORE_THRESHOLD: f64 = 0.5;

/// Samples from a `[1, H, W]` activation map: the candidates are the cells
/// of kept windows with activation above [`SCORE_THRESHOLD`], and
/// `min(n, candidates)` of them are drawn uniformly without replacement.
/// The result is in row-major cell order.
pub fn importance_from_scores(
    scores: &Tensor,
    part: &WindowPartition,
    n: usize,
    rng: &mut impl Rng,
) -> Result<PixelSampleSet> {
    let (h, w) = part.feature_dims;
    scores.expect_shape("importance scores", &[1, h, w])?;
    let s = scores.data();
    let mut candidates: Vec<(usize, usize)> = part
        .kept()
        .flat_map(|win| win.cells())
        .filter(|&(u, v)| s[v * w + u] > SCORE_THRESHOLD)
        .collect();
    candidates.sort_by_key(|&(u, v)| (v, u));
    let k = n.min(candidates.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), k).into_vec();
    picked.sort_unstable();
    let pixels: Vec<(usize, usize)> = picked.into_iter().map(|i| candidates[i]).collect();
    let scores = pixels.iter().map(|&(u, v)| s[v * w + u]).collect();
    Ok(PixelSampleSet {
        pixels,
        scores: Some(scores),
    })
}

/// Runs the sampler head over `[C, H, W]` features, applies the sigmoid
/// and samples as [`importance_from_scores`].
pub fn importance_sample(
    feature: &Tensor,
    head: &Module2D,
    store: &ParamStore,
    part: &WindowPartition,
    n: usize,
    rng: &mut impl Rng,
) -> Result<PixelSampleSet> {
    if head.out_channels() != Some(1) {
        return Err(Error::Config("sampler head must output one channel".into()));
    }
    let mut act = conv2d_forward(feature, head, store)?;
    act.data_mut().iter_mut().for_each(|x| *x = sigmoid(*x));
    importance_from_scores(&act, part, n, rng)
}
