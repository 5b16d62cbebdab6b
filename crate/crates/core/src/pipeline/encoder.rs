use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::data::PartialDataset;
use crate::disambig::{candidate_mask, uniform_over_candidates};
use crate::numkit::{Adam, Checkpoint, Matrix, Network, PriorNet};
use crate::{Error, Result};

/// Frozen classifier supplying the prior mean `f(x)` of the diffusion.
#[derive(Debug, Clone)]
pub struct EncoderPrior {
    net: PriorNet,
}

impl EncoderPrior {
    pub fn from_net(net: PriorNet) -> Self {
        Self { net }
    }

    pub fn net(&self) -> &PriorNet {
        &self.net
    }

    pub fn feature_dim(&self) -> usize {
        self.net.feature_dim()
    }

    pub fn classes(&self) -> usize {
        self.net.classes()
    }

    /// Class probabilities, one row per instance.
    pub fn prior(&self, features: &Matrix) -> Result<Matrix> {
        self.net.probabilities(features)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        self.net.save(ckpt);
    }

    pub fn load(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self { net: PriorNet::load(ckpt)? })
    }
}

/// Trains a softmax classifier by cross-entropy against targets spread
/// uniformly over each candidate set.
pub fn pretrain_encoder(data: &PartialDataset, cfg: &TrainConfig) -> Result<EncoderPrior> {
    data.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut net = PriorNet::new(data.feature_dim(), cfg.encoder_hidden, data.classes, &mut rng);
    let targets = uniform_over_candidates(&candidate_mask(&data.candidates, data.classes)?);
    let mut opt = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.encoder_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.features.select_rows(chunk);
            let y = targets.select_rows(chunk);
            let loss = net.forward_backward(&x, &y).map_err(|e| match e {
                Error::NonFinite { layer } => Error::NonFinite { layer: format!("{layer} (encoder epoch {})", epoch + 1) },
                other => other,
            })?;
            total += loss * chunk.len() as f64;
            opt.step(&mut net.params_mut())?;
        }
        log::debug!("encoder epoch {} loss {:.6}", epoch + 1, total / data.len() as f64);
    }
    Ok(EncoderPrior { net })
}
