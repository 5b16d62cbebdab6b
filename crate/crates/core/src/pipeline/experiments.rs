use serde::{Deserialize, Serialize};

use super::encoder::pretrain_encoder;
use super::infer::evaluate;
use super::train::train_with_encoder;
use super::TrainConfig;
use crate::data::{kfold, PartialDataset};
use crate::{Error, Result};

/// The four ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    WithoutInit,
    WithoutTransition,
    WithoutBoth,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::WithoutInit, Variant::WithoutTransition, Variant::WithoutBoth];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "DDMP",
            Variant::WithoutInit => "DDMP-w/o-I",
            Variant::WithoutTransition => "DDMP-w/o-T",
            Variant::WithoutBoth => "DDMP-w/o-IT",
        }
    }

    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let (use_i, use_t) = match self {
            Variant::Full => (true, true),
            Variant::WithoutInit => (false, true),
            Variant::WithoutTransition => (true, false),
            Variant::WithoutBoth => (false, false),
        };
        TrainConfig { use_i, use_t, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: f64,
    pub ece: f64,
}

/// Trains every variant on `train` (sharing one pretrained encoder) and scores
/// each on `test`.
pub fn ablate(train: &PartialDataset, test: &PartialDataset, cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let encoder = pretrain_encoder(train, cfg)?;
    Variant::ALL
        .iter()
        .map(|&v| {
            let trained = train_with_encoder(train, encoder.clone(), &v.configure(cfg))?;
            let report = evaluate(&trained, test)?;
            Ok(AblationRow { variant: v.name().to_string(), accuracy: report.accuracy, ece: report.ece })
        })
        .collect()
}

/// Fixed-width comparison table, one row per variant.
pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<12} {:>9} {:>9}\n", "variant", "accuracy", "ece");
    for r in rows {
        out += &format!("{:<12} {:>9.4} {:>9.4}\n", r.variant, r.accuracy, r.ece);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvalReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation across folds (0 for a single fold).
    pub std_accuracy: f64,
    pub mean_ece: f64,
    pub seed: u64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// k-fold cross-validation; fold `f` trains on the other folds with seed
/// `cfg.seed + f`. Results are listed in fold order.
pub fn cross_validate(data: &PartialDataset, folds: usize, cfg: &TrainConfig) -> Result<XvalReport> {
    cfg.validate()?;
    if data.truth.is_none() {
        return Err(Error::Data("cross-validation needs true labels".into()));
    }
    if folds < 2 {
        return Err(Error::config("folds", format!("need at least 2 folds, got {folds}")));
    }
    let spec = kfold(data.len(), folds, cfg.seed)?;
    let mut results = Vec::with_capacity(folds);
    for f in 0..folds {
        let fold_cfg = TrainConfig { seed: cfg.seed.wrapping_add(f as u64), ..cfg.clone() };
        let train = data.subset(&spec.train_indices(f));
        let test = data.subset(&spec.folds[f]);
        let encoder = pretrain_encoder(&train, &fold_cfg)?;
        let trained = train_with_encoder(&train, encoder, &fold_cfg)?;
        let report = evaluate(&trained, &test)?;
        log::info!("fold {}: accuracy {:.4} ece {:.4}", f + 1, report.accuracy, report.ece);
        results.push(FoldResult { fold: f, accuracy: report.accuracy, ece: report.ece, n_test: test.len() });
    }
    let (mean_accuracy, std_accuracy) = mean_std(&results.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let (mean_ece, _) = mean_std(&results.iter().map(|r| r.ece).collect::<Vec<_>>());
    Ok(XvalReport { folds: results, mean_accuracy, std_accuracy, mean_ece, seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_flags_and_names() {
        let base = TrainConfig::default();
        let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
        assert_eq!(names, ["DDMP", "DDMP-w/o-I", "DDMP-w/o-T", "DDMP-w/o-IT"]);
        let c = Variant::WithoutInit.configure(&base);
        assert!(!c.use_i && c.use_t);
        let c = Variant::WithoutBoth.configure(&base);
        assert!(!c.use_i && !c.use_t);
    }

    #[test]
    fn table_has_a_row_per_variant() {
        let rows: Vec<_> = Variant::ALL
            .iter()
            .map(|v| AblationRow { variant: v.name().into(), accuracy: 0.5, ece: 0.1 })
            .collect();
        let table = format_ablation(&rows);
        assert_eq!(table.lines().count(), 5);
        assert!(table.lines().nth(4).unwrap().starts_with("DDMP-w/o-IT"));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
