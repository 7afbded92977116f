use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("backward called on {0}")]
    Backward(String),

    #[error("calibration: {0}")]
    Calib(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("degenerate correspondences: {0}")]
    Degenerate(String),

    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("grid too large for exhaustive scan: {0} voxels")]
    GridTooLarge(usize),

    #[error("empty ray set")]
    EmptyRaySet,

    #[error("scene: {0}")]
    Scene(String),

    #[error("config: {0}")]
    Config(String),

    #[error("loss diverged at step {step}")]
    Diverged { step: usize },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
