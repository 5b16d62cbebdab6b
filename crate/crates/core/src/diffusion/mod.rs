//! Label-space diffusion with a non-zero latent mean.

mod loss;
mod process;
mod sampler;
mod schedule;

pub use loss::{diffusion_loss, diffusion_loss_fixed, DiffusionBatch};
pub use process::{forward_sample, forward_sample_batch, posterior_step, predict_s0, predict_s0_batch, NoisedLabel};
pub use sampler::{
    make_trajectory, sample_reverse, sample_reverse_with, NoiseModel, NoiseSource, RowStreams, ZeroNoise, DEFAULT_CLAMP,
};
pub use schedule::{make_schedule, DiffusionSchedule, PosteriorCoefficients};
