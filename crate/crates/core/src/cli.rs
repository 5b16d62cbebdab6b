//! The `ddmp` command-line tool.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on any
//! other failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_dataset, make_blobs, partialize, train_test_split, write_dataset, PartialDataset};
use crate::eval::emit_report;
use crate::numkit::Checkpoint;
use crate::pipeline::{
    ablate, cross_validate, evaluate, format_ablation, pretrain_encoder, train_with_encoder, EncoderPrior, TrainConfig,
    TrainedModel,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ddmp", version, about = "Diffusion-based disambiguation for partial label learning")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic partial-label dataset.
    Synth(SynthArgs),
    /// Pretrain the prior encoder on the training split.
    Pretrain(PretrainArgs),
    /// Train the diffusion model and refine pseudo-clean labels.
    Train(TrainArgs),
    /// Predict, score and write report files.
    Eval(EvalArgs),
    /// k-fold cross-validation.
    Xval(XvalArgs),
    /// Train and compare the four ablation variants.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    /// Probability that each wrong label joins a candidate set.
    #[arg(long, default_value_t = 0.3)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Config file plus per-key overrides; every key of the config file is also a flag.
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    update_every: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    update_draws: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long)]
    trajectory: Option<usize>,
    #[arg(long)]
    one_hot: Option<bool>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    use_i: Option<bool>,
    #[arg(long)]
    use_t: Option<bool>,
    #[arg(long)]
    include_self: Option<bool>,
    #[arg(long)]
    encoder_epochs: Option<usize>,
    #[arg(long)]
    encoder_hidden: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long)]
    time_dim: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    n_draws: Option<usize>,
    #[arg(long)]
    n_bins: Option<usize>,
    #[arg(long)]
    standardize: Option<bool>,
    #[arg(long)]
    test_frac: Option<f64>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn put<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut out = Vec::new();
        put(&mut out, "seed", &self.seed);
        put(&mut out, "epochs", &self.epochs);
        put(&mut out, "batch_size", &self.batch_size);
        put(&mut out, "lr", &self.lr);
        put(&mut out, "update_every", &self.update_every);
        put(&mut out, "warmup", &self.warmup);
        put(&mut out, "update_draws", &self.update_draws);
        put(&mut out, "steps", &self.steps);
        put(&mut out, "beta_start", &self.beta_start);
        put(&mut out, "beta_end", &self.beta_end);
        put(&mut out, "trajectory", &self.trajectory);
        put(&mut out, "one_hot", &self.one_hot);
        put(&mut out, "k", &self.k);
        put(&mut out, "q", &self.q);
        put(&mut out, "lambda", &self.lambda);
        put(&mut out, "use_i", &self.use_i);
        put(&mut out, "use_t", &self.use_t);
        put(&mut out, "include_self", &self.include_self);
        put(&mut out, "encoder_epochs", &self.encoder_epochs);
        put(&mut out, "encoder_hidden", &self.encoder_hidden);
        put(&mut out, "hidden", &self.hidden);
        put(&mut out, "tokens", &self.tokens);
        put(&mut out, "time_dim", &self.time_dim);
        put(&mut out, "blocks", &self.blocks);
        put(&mut out, "n_draws", &self.n_draws);
        put(&mut out, "n_bins", &self.n_bins);
        put(&mut out, "standardize", &self.standardize);
        put(&mut out, "test_frac", &self.test_frac);
        out
    }

    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text).map_err(|e| match e {
                Error::Parse { line, reason } => {
                    Error::config("config", format!("{}:{line}: {reason}", path.display()))
                }
                other => other,
            })?;
        }
        for (k, v) in self.overrides() {
            cfg.apply_kv(k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Encoder checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory for `model.ckpt` and `train_log.jsonl`.
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
    /// Reuse a pretrained encoder instead of training one.
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Subset {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Directory for `report.json`, `reliability.csv` and `reliability.svg`.
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
    /// Which instances to score; splits follow the model's training seed.
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    subset: Subset,
    #[arg(long)]
    n_draws: Option<usize>,
    #[arg(long)]
    n_bins: Option<usize>,
}

#[derive(Debug, Args)]
struct XvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Where to write `xval.json`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Where to write `ablation.json`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn split(data: &PartialDataset, cfg: &TrainConfig) -> Result<(PartialDataset, PartialDataset)> {
    let (train, test) = train_test_split(data.len(), cfg.test_frac, cfg.seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.q) {
        return Err(Error::config("q", format!("{} is outside [0, 1]", a.q)));
    }
    let clean = make_blobs(a.n, a.classes, a.dim, a.separation, a.seed)?;
    let data = partialize(&clean, a.q, a.seed)?;
    write_dataset(&data, &a.out)?;
    println!(
        "wrote {} instances, {} classes, mean candidate set size {:.3} to {}",
        data.len(),
        data.classes,
        data.mean_candidate_size(),
        a.out.display()
    );
    Ok(())
}

fn cmd_pretrain(a: &PretrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let data = load_dataset(&a.data, cfg.standardize)?;
    let (train, _) = split(&data, &cfg)?;
    let encoder = pretrain_encoder(&train, &cfg)?;
    let mut ckpt = Checkpoint::new();
    encoder.save(&mut ckpt);
    ckpt.save(&a.out)?;
    println!("encoder written to {}", a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let data = load_dataset(&a.data, cfg.standardize)?;
    let (train, _) = split(&data, &cfg)?;
    let encoder = match &a.encoder {
        Some(path) => EncoderPrior::load(&Checkpoint::load(path)?)?,
        None => pretrain_encoder(&train, &cfg)?,
    };
    let trained = train_with_encoder(&train, encoder, &cfg)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    trained.save(&a.out_dir.join("model.ckpt"))?;
    write_file(&a.out_dir.join("train_log.jsonl"), &trained.log_jsonl())?;
    if let Some(last) = trained.log.last() {
        println!(
            "trained {} epochs: loss {:.5}, train label accuracy {}",
            last.epoch,
            last.loss,
            last.train_acc.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
    }
    println!("model and log written to {}", a.out_dir.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut trained = TrainedModel::load(&a.model)?;
    if let Some(v) = a.n_draws {
        trained.config.apply_kv("n_draws", &v.to_string())?;
    }
    if let Some(v) = a.n_bins {
        trained.config.apply_kv("n_bins", &v.to_string())?;
    }
    trained.config.validate()?;
    let data = load_dataset(&a.data, trained.config.standardize)?;
    let subset = match a.subset {
        Subset::All => data,
        Subset::Train => split(&data, &trained.config)?.0,
        Subset::Test => split(&data, &trained.config)?.1,
    };
    let report = evaluate(&trained, &subset)?;
    emit_report(&report, &a.out_dir)?;
    println!(
        "accuracy {:.4}, ECE {:.4} on {} instances; report in {}",
        report.accuracy,
        report.ece,
        report.n_eval,
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_xval(a: &XvalArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let data = load_dataset(&a.data, cfg.standardize)?;
    let report = cross_validate(&data, a.folds, &cfg)?;
    for f in &report.folds {
        println!("fold {:>2}: accuracy {:.4} ece {:.4} (n={})", f.fold + 1, f.accuracy, f.ece, f.n_test);
    }
    println!("accuracy {:.2} ± {:.2}%", 100.0 * report.mean_accuracy, 100.0 * report.std_accuracy);
    if let Some(dir) = &a.out_dir {
        write_file(&dir.join("xval.json"), &to_json(&report))?;
    }
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let data = load_dataset(&a.data, cfg.standardize)?;
    let (train, test) = split(&data, &cfg)?;
    let rows = ablate(&train, &test, &cfg)?;
    print!("{}", format_ablation(&rows));
    if let Some(dir) = &a.out_dir {
        write_file(&dir.join("ablation.json"), &to_json(&rows))?;
    }
    Ok(())
}

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Xval(a) => cmd_xval(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => 0,
        Err(Error::Config { key, reason }) => {
            eprintln!("error: invalid value for {}: {reason}", flag_name(&key));
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
