//! Prior pretraining, the alternating training loop, inference and the
//! ablation / cross-validation drivers.

mod config;
mod encoder;
mod experiments;
mod infer;
mod train;

pub use config::TrainConfig;
pub use encoder::{pretrain_encoder, EncoderPrior};
pub use experiments::{ablate, cross_validate, format_ablation, AblationRow, FoldResult, Variant, XvalReport};
pub use infer::{evaluate, infer_labels, infer_with_streams, to_probabilities, Inference};
pub use train::{initial_labels, train, train_with_encoder, EpochLog, TrainedModel};
