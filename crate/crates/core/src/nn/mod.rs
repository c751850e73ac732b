//! Convolutional network engine: configuration, forward pass,
//! backpropagation, weighted training, checkpoints and resource accounting.

pub mod checkpoint;
mod config;
mod fftconv;
mod flops;
mod layers;
mod network;
mod tensor;
mod train;

pub use config::{conv_extent, Activation, LayerSpec, NetworkConfig};
pub use flops::{conv_flops_per_filter, count_flops, count_params, layer_costs, tec, LayerCost, DEFAULT_FLOPS_PER_WATT};
pub use network::{decide, BackpropRule, Gradients, LayerParams, Network, NetworkState, ReluRecord};
pub use tensor::{Shape, Tensor};
pub use train::{default_class_weights, Sample, TrainConfig};
