//! Minimal feed-forward network engine: dense and 2-D convolution layers,
//! forward inference, exact backpropagation and plain SGD training,
//! deterministic under a seed.

pub mod arch;
pub mod backprop;
pub mod layer;
pub mod network;
pub mod serialize;
pub mod train;

pub use arch::parse_arch;
pub use backprop::{loss_and_gradients, Gradients, Targets};
pub use layer::{compose_shapes, LayerSpec};
pub use network::{ForwardTrace, LayerParams, Network};
pub use serialize::{load_network, save_network};
pub use train::{train, EpochStats, TrainConfig, TrainReport};

use crate::error::Result;

/// Builds a network with seeded Glorot-uniform weights and zero biases.
pub fn init_network(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Network> {
    Network::init(input_shape, specs, seed)
}

/// Forward inference over a batch shaped `[n] + input_shape`; returns logits.
pub fn forward(net: &Network, batch: &crate::tensor::Tensor) -> Result<crate::tensor::Tensor> {
    net.forward(batch)
}
