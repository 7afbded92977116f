//! Dense f64 kernels with reverse-mode gradients.

mod gradcheck;
mod graph;
pub mod kernels;
mod layers;
mod loss;
mod tensor;

pub use gradcheck::{finite_diff_grad_check, GradCheckReport};
pub use graph::{Graph, LossKind, NodeId};
pub use kernels::{sigmoid, Activation, PROB_EPS};
pub use layers::{conv2d_forward, mlp_forward, Dense, Layer2D, Mlp, Module2D};
pub use loss::{bce_loss, focal_loss, FocalParams};
pub use tensor::{Param, ParamId, ParamStore, Tensor};
