use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::ImageOpMode;
use crate::fusion::FusionConfig;
use crate::geometry::{parse_kitti_calib, Camera, GridSpec};
use crate::sampler::HeuristicMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub origin: [f64; 3],
    pub voxel_size: [f64; 3],
    pub dims: [usize; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            origin: [4.0, -8.0, -2.0],
            voxel_size: [1.0, 1.0, 0.5],
            dims: [16, 16, 16],
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.origin, self.voxel_size, self.dims)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Focal length in pixels for the built-in forward-looking camera.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    /// Image pixels per feature cell.
    pub stride: usize,
    /// KITTI calibration file; replaces the built-in camera when set.
    pub calib: Option<PathBuf>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            focal: 32.0,
            width: 64,
            height: 64,
            stride: 4,
            calib: None,
        }
    }
}

impl CameraConfig {
    pub fn camera(&self) -> Result<Camera> {
        match &self.calib {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(Camera::from_kitti(&parse_kitti_calib(&text)?, self.height, self.width))
            }
            None => Ok(Camera::forward(self.focal, self.width, self.height)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Fixed random projection of the pooled image.
    Encoder,
    /// Checkerboard, independent of the image.
    Pattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub objects: usize,
    pub points_per_object: usize,
    pub ground_points: usize,
    /// Image feature width.
    pub channels: usize,
    pub features: FeatureSource,
    /// Seed of the fixed feature encoder.
    pub encoder_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            objects: 3,
            points_per_object: 48,
            ground_points: 64,
            channels: 32,
            features: FeatureSource::Encoder,
            encoder_seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip: bool,
    pub rescale: f64,
    /// Radians about z.
    pub rotate: f64,
    pub image_ops: ImageOpMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip: false,
            rescale: 1.0,
            rotate: 0.0,
            image_ops: ImageOpMode::ImageLevel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Importance,
    Uniformity,
    Density,
    Sparsity,
}

impl SamplerMode {
    pub fn heuristic(self) -> Option<HeuristicMode> {
        match self {
            SamplerMode::Importance => None,
            SamplerMode::Uniformity => Some(HeuristicMode::Uniformity),
            SamplerMode::Density => Some(HeuristicMode::Density),
            SamplerMode::Sparsity => Some(HeuristicMode::Sparsity),
        }
    }
}

impl std::str::FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "importance" => Ok(Self::Importance),
            "uniformity" => Ok(Self::Uniformity),
            "density" => Ok(Self::Density),
            "sparsity" => Ok(Self::Sparsity),
            _ => Err(Error::Config(format!(
                "unknown sampler mode {s:?} (importance, uniformity, density, sparsity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    /// Ray budget per frame.
    pub n: usize,
    /// Window size in feature cells.
    pub window: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Importance,
            n: 2048,
            window: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub scenes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.05,
            scenes: 4,
        }
    }
}

/// Everything a run needs. Serialized as TOML with one table per section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Apply the inference score threshold when selecting voxels.
    pub inference: bool,
    pub grid: GridConfig,
    pub camera: CameraConfig,
    pub scene: SceneConfig,
    pub augment: AugmentConfig,
    pub sampler: SamplerConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.spec()?;
        self.fusion.validate()?;
        if self.camera.stride == 0 || self.camera.width == 0 || self.camera.height == 0 {
            return Err(Error::Config("camera width, height and stride must be positive".into()));
        }
        if self.scene.channels == 0 {
            return Err(Error::Config("scene.channels must be positive".into()));
        }
        if self.sampler.window == 0 {
            return Err(Error::Config("sampler.window must be positive".into()));
        }
        if !(self.train.lr >= 0.0) {
            return Err(Error::Config(format!(
                "train.lr must be non-negative, got {}",
                self.train.lr
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = Config::default();
        cfg.seed = 7;
        cfg.augment.flip = true;
        cfg.sampler.mode = SamplerMode::Density;
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = Config::from_toml("seed = 3\n[fusion]\nmode = \"single\"\nradius = 2.0\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.fusion.radius, 2.0);
        assert_eq!(cfg.grid, GridConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Config::from_toml("[grid]\nsize = 3\n").is_err());
        assert!(Config::from_toml("[fusion]\nradius = -1.0\n").is_err());
        assert!(Config::from_toml("[grid]\ndims = [0, 4, 4]\n").is_err());
    }
}
