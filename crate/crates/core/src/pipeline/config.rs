use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::diffusion::DiffusionSchedule;
use crate::numkit::NetConfig;
use crate::{Error, Result};

/// Every tunable of pretraining, training and inference.
///
/// Keys accepted by [`TrainConfig::apply_kv`] are the field names; dashes and
/// underscores are interchangeable.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Re-estimate `T` and `S` every this many epochs.
    pub update_every: usize,
    /// Epochs of noise-model training before the first label update.
    pub warmup: usize,
    /// Reverse draws averaged into `S̃0` at each label update.
    pub update_draws: usize,
    /// Diffusion length `T`.
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub trajectory: usize,
    /// Train the noise model on one-hot `argmax(S)` instead of soft `S`.
    pub one_hot: bool,
    pub k: usize,
    /// Flip probability for synthetic candidate sets.
    pub q: f64,
    pub lambda: f64,
    pub use_i: bool,
    pub use_t: bool,
    pub include_self: bool,
    pub encoder_epochs: usize,
    pub encoder_hidden: usize,
    pub hidden: usize,
    pub tokens: usize,
    pub time_dim: usize,
    pub blocks: usize,
    pub n_draws: usize,
    pub n_bins: usize,
    pub standardize: bool,
    pub test_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
            update_every: 1,
            warmup: 20,
            update_draws: 1,
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            trajectory: 10,
            one_hot: false,
            k: 10,
            q: 0.3,
            lambda: 0.05,
            use_i: true,
            use_t: true,
            include_self: false,
            encoder_epochs: 50,
            encoder_hidden: 128,
            hidden: 128,
            tokens: 8,
            time_dim: 64,
            blocks: 2,
            n_draws: 10,
            n_bins: 10,
            standardize: true,
            test_frac: 0.2,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.trim().parse().map_err(|e| Error::config(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::config(key, format!("{other:?} is not a boolean"))),
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl TrainConfig {
    /// Sets one field from its textual value. Unknown keys are config errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "epochs" => self.epochs = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "lr" => self.lr = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "update_every" => self.update_every = parse(k, value)?,
            "warmup" => self.warmup = parse(k, value)?,
            "update_draws" => self.update_draws = parse(k, value)?,
            "steps" => self.steps = parse(k, value)?,
            "beta_start" => self.beta_start = parse(k, value)?,
            "beta_end" => self.beta_end = parse(k, value)?,
            "trajectory" => self.trajectory = parse(k, value)?,
            "one_hot" => self.one_hot = parse_bool(k, value)?,
            "k" => self.k = parse(k, value)?,
            "q" => self.q = parse(k, value)?,
            "lambda" => self.lambda = parse(k, value)?,
            "use_i" => self.use_i = parse_bool(k, value)?,
            "use_t" => self.use_t = parse_bool(k, value)?,
            "include_self" => self.include_self = parse_bool(k, value)?,
            "encoder_epochs" => self.encoder_epochs = parse(k, value)?,
            "encoder_hidden" => self.encoder_hidden = parse(k, value)?,
            "hidden" => self.hidden = parse(k, value)?,
            "tokens" => self.tokens = parse(k, value)?,
            "time_dim" => self.time_dim = parse(k, value)?,
            "blocks" => self.blocks = parse(k, value)?,
            "n_draws" => self.n_draws = parse(k, value)?,
            "n_bins" => self.n_bins = parse(k, value)?,
            "standardize" => self.standardize = parse_bool(k, value)?,
            "test_frac" => self.test_frac = parse(k, value)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text. `#` starts a comment; blank lines
    /// are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected `key = value`, got {line:?}"),
            })?;
            self.apply_kv(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// All fields as text, keyed like [`TrainConfig::apply_kv`].
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let entries: [(&str, String); 28] = [
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("seed", self.seed.to_string()),
            ("update_every", self.update_every.to_string()),
            ("warmup", self.warmup.to_string()),
            ("update_draws", self.update_draws.to_string()),
            ("steps", self.steps.to_string()),
            ("beta_start", self.beta_start.to_string()),
            ("beta_end", self.beta_end.to_string()),
            ("trajectory", self.trajectory.to_string()),
            ("one_hot", self.one_hot.to_string()),
            ("k", self.k.to_string()),
            ("q", self.q.to_string()),
            ("lambda", self.lambda.to_string()),
            ("use_i", self.use_i.to_string()),
            ("use_t", self.use_t.to_string()),
            ("include_self", self.include_self.to_string()),
            ("encoder_epochs", self.encoder_epochs.to_string()),
            ("encoder_hidden", self.encoder_hidden.to_string()),
            ("hidden", self.hidden.to_string()),
            ("tokens", self.tokens.to_string()),
            ("time_dim", self.time_dim.to_string()),
            ("blocks", self.blocks.to_string()),
            ("n_draws", self.n_draws.to_string()),
            ("n_bins", self.n_bins.to_string()),
            ("standardize", self.standardize.to_string()),
            ("test_frac", self.test_frac.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Rebuilds a config from [`TrainConfig::to_map`] output.
    pub fn from_map<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in entries {
            cfg.apply_kv(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("update_every", self.update_every),
            ("update_draws", self.update_draws),
            ("steps", self.steps),
            ("trajectory", self.trajectory),
            ("k", self.k),
            ("encoder_hidden", self.encoder_hidden),
            ("hidden", self.hidden),
            ("tokens", self.tokens),
            ("time_dim", self.time_dim),
            ("n_draws", self.n_draws),
            ("n_bins", self.n_bins),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr", format!("{} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::config("q", format!("{} is outside [0, 1]", self.q)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda", format!("{} is outside [0, 1]", self.lambda)));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(Error::config("test_frac", format!("{} is outside (0, 1)", self.test_frac)));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return Err(Error::config(
                "beta_start",
                format!("need 0 < beta_start ≤ beta_end < 1, got {} and {}", self.beta_start, self.beta_end),
            ));
        }
        if self.trajectory > self.steps {
            return Err(Error::config("trajectory", format!("{} exceeds steps={}", self.trajectory, self.steps)));
        }
        self.net_config().validate()
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig { hidden: self.hidden, tokens: self.tokens, time_dim: self.time_dim, blocks: self.blocks }
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}
