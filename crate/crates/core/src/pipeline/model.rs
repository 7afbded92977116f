use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fusion::FusionModel;
use crate::numerics::{Module2D, ParamStore};

/// Both trainable heads and their parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub store: ParamStore,
    /// Per-cell sampler logits from image features.
    pub head: Module2D,
    pub fusion: FusionModel,
}

impl Model {
    /// `channels` is the image feature width, `field_channels` the voxel
    /// feature width.
    pub fn new(channels: usize, field_channels: usize, views: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let head = Module2D::sampler_head(&mut store, channels, &mut rng);
        let fusion = FusionModel::new(&mut store, views, channels, field_channels, &mut rng);
        Self { store, head, fusion }
    }
}
