//! Minimal dense-tensor network kernels with manual backward passes.
//!
//! Tensors are channel-last and batched: `(N, L, C)` for 1-D data and
//! `(N, H, W, C)` for 2-D data.

pub mod gemm;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use kernels::Padding;
pub use layers::{ForwardCtx, Layer, LayerParams, LayerSpec};
pub use loss::mse_loss;
pub use network::{Network, NetworkPlan, Sequential, ShapeTrace};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;
