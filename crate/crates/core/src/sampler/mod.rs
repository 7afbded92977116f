//! Choosing the feature cells that seed rays.

mod heuristic;
mod importance;
mod target;
mod window;

pub use heuristic::{heuristic_sample, HeuristicMode};
pub use importance::{importance_from_scores, importance_sample, SCORE_THRESHOLD};
pub use target::{gaussian_target_2d, sampler_loss, sampler_loss_node, Target2D, SAMPLER_LOSS_WEIGHT};
pub use window::{partition_windows, Window, WindowPartition};

use serde::{Deserialize, Serialize};

/// Sampled feature cells `(u, v)`, unique.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelSampleSet {
    pub pixels: Vec<(usize, usize)>,
    /// Head activation per pixel, present for importance sampling.
    pub scores: Option<Vec<f64>>,
}

impl PixelSampleSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}
