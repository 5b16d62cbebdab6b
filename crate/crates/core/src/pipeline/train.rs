use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{pretrain_encoder, EncoderPrior};
use super::infer::{derive_seed, sample_average};
use super::TrainConfig;
use crate::data::PartialDataset;
use crate::diffusion::{diffusion_loss, make_trajectory, DiffusionBatch};
use crate::disambig::{
    candidate_mask, estimate_transition, init_pseudo_clean_sparse, knn_adjacency, uniform_over_candidates,
    update_pseudo_clean, LabelState,
};
use crate::numkit::{Adam, Checkpoint, Matrix, Network, NoiseNet};
use crate::{Error, Result};

/// Seed tags keeping the independent random streams apart.
pub(crate) const STREAM_NET_INIT: u64 = 2;
pub(crate) const STREAM_TRAIN: u64 = 3;
pub(crate) const TAG_UPDATE: u64 = 0x7570_6461_7465;

/// One line of `train_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean noise-prediction loss over the epoch's instances.
    pub loss: f64,
    /// Accuracy of `argmax(S)` against the true labels, when known.
    pub train_acc: Option<f64>,
    /// Frobenius distance between successive transition matrices.
    pub t_drift: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

impl EpochLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log line serializes")
    }
}

/// Everything produced by [`train`].
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: NoiseNet,
    pub encoder: EncoderPrior,
    pub state: LabelState,
    pub log: Vec<EpochLog>,
    pub config: TrainConfig,
}

/// Starting `S`: the graph-based construction when `use_i`, else uniform over
/// candidates.
pub fn initial_labels(data: &PartialDataset, cfg: &TrainConfig) -> Result<Matrix> {
    let mask = candidate_mask(&data.candidates, data.classes)?;
    if !cfg.use_i {
        return Ok(uniform_over_candidates(&mask));
    }
    let k = cfg.k.min(data.len().saturating_sub(1));
    if k == 0 {
        return Ok(uniform_over_candidates(&mask));
    }
    let adj = knn_adjacency(&data.features, k)?.with_self_loops(cfg.include_self);
    init_pseudo_clean_sparse(&adj, &data.candidates, data.classes)
}

fn row_argmax(m: &Matrix) -> Vec<usize> {
    (0..m.rows()).map(|r| m.argmax_row(r)).collect()
}

fn label_accuracy(s: &Matrix, truth: Option<&[usize]>) -> Option<f64> {
    let truth = truth?;
    let hits = row_argmax(s).iter().zip(truth).filter(|(p, t)| p == t).count();
    Some(hits as f64 / truth.len().max(1) as f64)
}

fn one_hot_targets(s: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(s.rows(), s.cols());
    for r in 0..s.rows() {
        out.set(r, s.argmax_row(r), 1.0);
    }
    out
}

/// Pretrains the encoder, then runs [`train_with_encoder`].
pub fn train(data: &PartialDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let encoder = pretrain_encoder(data, cfg)?;
    train_with_encoder(data, encoder, cfg)
}

/// The alternating training loop.
///
/// Each epoch takes minibatch gradient steps on the noise-prediction loss
/// with the current `S` as clean targets. After `warmup` epochs, every
/// `update_every` epochs it draws `S̃0` for all instances by reverse sampling, re-estimates `T` from
/// `S` (identity when `use_t` is off) and refines `S`.
pub fn train_with_encoder(data: &PartialDataset, encoder: EncoderPrior, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    data.validate()?;
    if encoder.feature_dim() != data.feature_dim() || encoder.classes() != data.classes {
        return Err(Error::config(
            "encoder",
            format!(
                "encoder maps {}→{}, data has {} features and {} classes",
                encoder.feature_dim(),
                encoder.classes(),
                data.feature_dim(),
                data.classes
            ),
        ));
    }
    let start = Instant::now();
    let n = data.len();
    let sched = cfg.schedule()?;
    let trajectory = make_trajectory(cfg.steps, cfg.trajectory)?;
    let prior = encoder.prior(&data.features)?;
    let mask = candidate_mask(&data.candidates, data.classes)?;
    let mut state = LabelState::new(initial_labels(data, cfg)?, mask.clone())?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(STREAM_NET_INIT);
    let mut model = NoiseNet::new(data.feature_dim(), data.classes, cfg.net_config(), &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_TRAIN);
    let mut opt = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let stream_ids: Vec<u64> = (0..n as u64).collect();
    let truth = data.truth.as_deref();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let targets = if cfg.one_hot { one_hot_targets(&state.s) } else { state.s.clone() };
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let features = data.features.select_rows(chunk);
            let batch_targets = targets.select_rows(chunk);
            let batch_prior = prior.select_rows(chunk);
            let batch = DiffusionBatch { features: &features, targets: &batch_targets, prior: &batch_prior };
            let loss = diffusion_loss(&mut model, batch, &sched, &mut rng).map_err(|e| match e {
                Error::NonFinite { layer } => Error::NonFinite { layer: format!("{layer} (epoch {epoch})") },
                other => other,
            })?;
            total += loss * chunk.len() as f64;
            opt.step(&mut model.params_mut())?;
        }
        let loss = total / n as f64;

        let mut t_drift = 0.0;
        if epoch > cfg.warmup && (epoch - cfg.warmup).is_multiple_of(cfg.update_every) {
            let seed = derive_seed(cfg.seed, TAG_UPDATE, epoch as u64);
            let s0_tilde =
                sample_average(&model, &data.features, &prior, &sched, &trajectory, cfg.update_draws, seed, &stream_ids)?;
            let transition = if cfg.use_t { estimate_transition(&state.s, &mask)? } else { Matrix::identity(data.classes) };
            t_drift = transition.sub(&state.transition)?.frobenius();
            state.transition = transition;
            state = update_pseudo_clean(&state, &s0_tilde, cfg.lambda)?;
        }
        let entry = EpochLog {
            epoch,
            loss,
            train_acc: label_accuracy(&state.s, truth),
            t_drift,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.6} train_acc {} T drift {:.3e}",
            entry.loss,
            entry.train_acc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
            entry.t_drift
        );
        log.push(entry);
    }
    Ok(TrainedModel { model, encoder, state, log, config: cfg.clone() })
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        for (k, v) in self.config.to_map() {
            ckpt.set_meta(&format!("cfg.{k}"), v);
        }
        ckpt.set_meta("state.epoch", self.state.epoch);
        self.model.save(&mut ckpt);
        self.encoder.save(&mut ckpt);
        ckpt.insert("state.s", self.state.s.clone());
        ckpt.insert("state.s0_tilde", self.state.s0_tilde.clone());
        ckpt.insert("state.transition", self.state.transition.clone());
        ckpt.insert("state.mask", self.state.mask.clone());
        ckpt
    }

    /// Restores everything except the training log.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg_entries: Vec<(&str, &str)> =
            ckpt.meta_entries().filter_map(|(k, v)| k.strip_prefix("cfg.").map(|k| (k, v))).collect();
        let config = TrainConfig::from_map(cfg_entries)?;
        let model = NoiseNet::load(ckpt)?;
        let encoder = EncoderPrior::load(ckpt)?;
        let tensor = |name: &str| {
            ckpt.tensor(name).cloned().ok_or_else(|| Error::Data(format!("checkpoint lacks tensor {name}")))
        };
        let s = tensor("state.s")?;
        let q = s.cols();
        let state = LabelState {
            s0_tilde: ckpt.tensor_shaped("state.s0_tilde", s.shape())?.clone(),
            transition: ckpt.tensor_shaped("state.transition", (q, q))?.clone(),
            mask: ckpt.tensor_shaped("state.mask", s.shape())?.clone(),
            epoch: ckpt.meta_parse("state.epoch")?,
            s,
        };
        Ok(Self { model, encoder, state, log: Vec::new(), config })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// The training log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|e| e.to_json() + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, partialize};

    pub(crate) fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            warmup: 1,
            batch_size: 16,
            steps: 50,
            trajectory: 5,
            k: 3,
            encoder_epochs: 5,
            encoder_hidden: 16,
            hidden: 16,
            tokens: 4,
            time_dim: 8,
            blocks: 1,
            n_draws: 2,
            ..TrainConfig::default()
        }
    }

    fn tiny_data() -> PartialDataset {
        partialize(&make_blobs(40, 3, 4, 5.0, 11).unwrap(), 0.4, 11).unwrap()
    }

    #[test]
    fn state_stays_on_candidates() {
        let data = tiny_data();
        let trained = train(&data, &tiny_config()).unwrap();
        let s = &trained.state.s;
        for r in 0..s.rows() {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in 0..s.cols() {
                if !data.candidates[r].contains(&c) {
                    assert_eq!(s.get(r, c), 0.0);
                }
            }
        }
        assert_eq!(trained.log.len(), 3);
        assert_eq!(trained.state.epoch, 3);
    }

    #[test]
    fn ablation_without_t_keeps_identity() {
        let cfg = TrainConfig { use_i: false, use_t: false, ..tiny_config() };
        let trained = train(&tiny_data(), &cfg).unwrap();
        assert_eq!(trained.state.transition, Matrix::identity(3));
        assert!(trained.log.iter().all(|e| e.t_drift == 0.0));
    }

    #[test]
    fn uniform_start_without_graph() {
        let data = tiny_data();
        let cfg = TrainConfig { use_i: false, ..tiny_config() };
        let s = initial_labels(&data, &cfg).unwrap();
        for (r, set) in data.candidates.iter().enumerate() {
            for &c in set {
                assert_eq!(s.get(r, c), 1.0 / set.len() as f64);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let trained = train(&tiny_data(), &tiny_config()).unwrap();
        let back = TrainedModel::from_checkpoint(&Checkpoint::from_text(&trained.to_checkpoint().to_text()).unwrap()).unwrap();
        assert_eq!(back.config, trained.config);
        assert_eq!(back.state, trained.state);
        let x = Matrix::filled(2, 4, 0.3);
        assert_eq!(back.encoder.prior(&x).unwrap(), trained.encoder.prior(&x).unwrap());
    }

    #[test]
    fn mismatched_encoder_is_config_error() {
        let data = tiny_data();
        let other = partialize(&make_blobs(40, 2, 4, 5.0, 1).unwrap(), 0.4, 1).unwrap();
        let enc = pretrain_encoder(&other, &tiny_config()).unwrap();
        assert!(train_with_encoder(&data, enc, &tiny_config()).unwrap_err().is_config());
    }
}
