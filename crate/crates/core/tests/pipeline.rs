use ddmp::data::{make_blobs, partialize, PartialDataset};
use ddmp::numkit::Matrix;
use ddmp::pipeline::{
    initial_labels, infer_labels, infer_with_streams, pretrain_encoder, train, train_with_encoder, TrainConfig,
};

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        warmup: 5,
        batch_size: 16,
        steps: 100,
        trajectory: 5,
        k: 5,
        encoder_epochs: 20,
        encoder_hidden: 16,
        hidden: 16,
        tokens: 4,
        time_dim: 8,
        blocks: 1,
        n_draws: 3,
        lr: 3e-3,
        ..TrainConfig::default()
    }
}

fn blobs(n: usize, seed: u64) -> PartialDataset {
    let mut data = partialize(&make_blobs(n, 3, 4, 6.0, seed).unwrap(), 0.4, seed).unwrap();
    data.standardize();
    data
}

#[test]
fn loss_descends() {
    let trained = train(&blobs(50, 1), &small_config()).unwrap();
    let first = trained.log.first().unwrap().loss;
    let last = trained.log.last().unwrap().loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn training_log_is_reproducible() {
    let data = blobs(50, 2);
    let cfg = TrainConfig { epochs: 8, ..small_config() };
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.log.len(), b.log.len());
    for (x, y) in a.log.iter().zip(&b.log) {
        // Everything except wall-clock time is bit-identical.
        assert_eq!((x.epoch, x.loss.to_bits(), x.train_acc.map(f64::to_bits), x.t_drift.to_bits()),
                   (y.epoch, y.loss.to_bits(), y.train_acc.map(f64::to_bits), y.t_drift.to_bits()));
    }
    assert_eq!(a.state, b.state);
    let pa = infer_labels(&a.model, &a.encoder, &data.features, &cfg, 2).unwrap();
    let pb = infer_labels(&b.model, &b.encoder, &data.features, &cfg, 2).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn inference_outputs_probabilities_and_is_pure() {
    let data = blobs(40, 3);
    let cfg = TrainConfig { epochs: 3, ..small_config() };
    let trained = train(&data, &cfg).unwrap();
    let inf = infer_labels(&trained.model, &trained.encoder, &data.features, &cfg, 4).unwrap();
    for r in 0..inf.probs.rows() {
        assert!((inf.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(inf.predictions[r], inf.probs.argmax_row(r));
    }
    // Two copies of one instance on a shared stream get identical outputs.
    let x = Matrix::from_rows(&[data.features.row(7), data.features.row(7), data.features.row(2)]).unwrap();
    let prior = trained.encoder.prior(&x).unwrap();
    let sched = cfg.schedule().unwrap();
    let traj = ddmp::diffusion::make_trajectory(cfg.steps, cfg.trajectory).unwrap();
    let out = infer_with_streams(&trained.model, &x, &prior, &sched, &traj, 3, 5, &[11, 11, 12]).unwrap();
    assert_eq!(out.probs.row(0), out.probs.row(1));
    assert_eq!(out.predictions[0], out.predictions[1]);
}

#[test]
fn without_init_and_transition_starts_uniform() {
    let data = blobs(40, 4);
    let cfg = TrainConfig { use_i: false, use_t: false, epochs: 2, ..small_config() };
    let s = initial_labels(&data, &cfg).unwrap();
    for (r, set) in data.candidates.iter().enumerate() {
        for &c in set {
            assert_eq!(s.get(r, c), 1.0 / set.len() as f64);
        }
    }
    let trained = train(&data, &cfg).unwrap();
    assert_eq!(trained.state.transition, Matrix::identity(3));
}

/// Fraction of epoch-to-epoch transitions in which the accuracy of argmax(S)
/// does not drop; expected to be high when refinement behaves like EM.
#[test]
fn label_refinement_rarely_regresses() {
    let data = blobs(120, 5);
    let cfg = TrainConfig { epochs: 30, warmup: 10, ..small_config() };
    let encoder = pretrain_encoder(&data, &cfg).unwrap();
    let trained = train_with_encoder(&data, encoder, &cfg).unwrap();
    let accs: Vec<f64> = trained.log.iter().map(|e| e.train_acc.unwrap()).collect();
    let steps = accs.windows(2).count();
    let kept = accs.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(kept as f64 >= 0.8 * steps as f64, "{kept}/{steps}: {accs:?}");
}
