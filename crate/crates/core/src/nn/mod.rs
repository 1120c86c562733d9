//! Self-ONN layers, network composition and model files.

pub mod kernels;
pub mod layers;
pub mod model_io;
pub mod network;
pub mod spec;

pub use layers::{
    dense_backward, dense_forward, op_conv1d_backward, op_conv1d_forward, op_tconv1d_backward,
    op_tconv1d_forward, tanh_backward, tanh_forward, Activation, KernelRef, LayerGrads,
    OperationalKernel,
};
pub use model_io::{load_model, save_model};
pub use network::{backward_network, forward_network, Network, Tape};
pub use spec::{count_params, LayerKind, LayerSpec, NetworkSpec, Skip};
