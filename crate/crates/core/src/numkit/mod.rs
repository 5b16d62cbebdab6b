//! Dense numerics, differentiable layers, networks, optimizer and checkpoints.

pub mod checkpoint;
pub mod layers;
mod matrix;
pub mod net;
pub mod optim;

pub use checkpoint::Checkpoint;
pub use layers::{cross_attention, sinusoidal_embed, BatchNorm, CrossAttention, Linear, Param};
pub use matrix::Matrix;
pub use net::{NetConfig, Network, NoiseInput, NoiseNet, PriorNet};
pub use optim::Adam;
