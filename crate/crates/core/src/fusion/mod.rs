//! Ray-voxel interaction: scoring ray voxels against the image feature,
//! choosing which to fuse, and writing fused features into the field.

mod embed;
mod fuse;
mod target;

pub use embed::{cell_feature, coord_embed, fused_feature, ray_weight, score_ray, ScoredRay};
pub use fuse::{fuse_frame, fuse_local, fuse_ray, fuse_single, gaussian_weight, select_top, FusionStats, LocalMode};
pub use target::{gaussian_target_3d, ray_loss, ray_loss_node, RayLossTerm, Target3D};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{Activation, Dense, FocalParams, Mlp, ParamId, ParamStore};
use crate::{Error, Result};

/// Which voxels of a ray receive image features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Anchor voxels only, weight 1.
    Single,
    /// Each anchor gathers Gaussian-weighted features from ray voxels
    /// within the radius.
    LocalAggregate,
    /// Ray voxels within the radius of an anchor receive its feature,
    /// Gaussian-weighted.
    LocalPropagate,
    /// Every ray voxel is scored; the top scorers are fused by score.
    RayWise,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "local_aggregate" => Ok(Self::LocalAggregate),
            "local_propagate" => Ok(Self::LocalPropagate),
            "ray_wise" => Ok(Self::RayWise),
            _ => Err(Error::Config(format!(
                "unknown fusion mode {s:?} (single, local_aggregate, local_propagate, ray_wise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// Supervision and local-fusion radius, in voxels.
    pub radius: f64,
    /// Gaussian spread in voxels; `None` means half the radius.
    pub sigma: Option<f64>,
    pub loss_weight: f64,
    /// Fraction of the frame's pre-fusion occupancy that may be fused.
    pub top_fraction: f64,
    /// Minimum score for a voxel to be fused at inference.
    pub infer_threshold: f64,
    pub focal: FocalParams,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::RayWise,
            radius: 1.0,
            sigma: None,
            loss_weight: 5.0,
            top_fraction: 0.25,
            infer_threshold: 0.05,
            focal: FocalParams::default(),
        }
    }
}

impl FusionConfig {
    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.radius / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 0.0) {
            return Err(Error::OutOfRange {
                name: "radius",
                value: self.radius,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        for (name, value) in [
            ("top_fraction", self.top_fraction),
            ("infer_threshold", self.infer_threshold),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::Config(format!("sigma must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Learned parts of the fusion stage: one coordinate MLP per camera view
/// and the fusion layer over `[image feature, coordinate embedding]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionModel {
    pub embeds: Vec<Mlp>,
    pub fuse: Dense,
}

impl FusionModel {
    /// `channels` is the image feature width (and embedding width);
    /// `field_channels` the voxel feature width.
    pub fn new(
        store: &mut ParamStore,
        views: usize,
        channels: usize,
        field_channels: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let embeds = (0..views.max(1))
            .map(|v| {
                Mlp::new(
                    store,
                    &format!("coord_mlp.view{v}"),
                    &[3, channels, channels, channels],
                    Activation::Relu,
                    rng,
                )
            })
            .collect();
        let fuse = Dense::new(store, "fuse", 2 * channels, field_channels, rng);
        Self { embeds, fuse }
    }

    pub fn embed(&self, view: usize) -> Result<&Mlp> {
        self.embeds
            .get(view)
            .ok_or_else(|| Error::Config(format!("no coordinate MLP for view {view}")))
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.embeds.iter().flat_map(Mlp::params).collect();
        p.extend([self.fuse.weight, self.fuse.bias]);
        p
    }
}
