//! Training configuration and the flat key=value config file format.

use std::path::PathBuf;

use crate::nn::{FusionMode, ModelDims};
use crate::rep::Scale;

/// How the multi-scale model's bar decoder (and the shared decomposition and
/// heads) start out: copied from a pretrained bar checkpoint, or freshly
/// initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarInit {
    Pretrained,
    Scratch,
}

impl BarInit {
    pub fn name(&self) -> &'static str {
        match self {
            BarInit::Pretrained => "pretrained",
            BarInit::Scratch => "scratch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Sequences longer than this are split at bar boundaries.
    pub max_seq_len: usize,
    pub seed: u64,
    pub fusion: FusionMode,
    /// Prediction target; fixed to bar for the multi-scale model.
    pub target_scale: Scale,
    pub val_every: usize,
    pub ckpt: PathBuf,
    pub bar_init: BarInit,
    pub dims: ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            batch_size: 4,
            max_steps: 2000,
            max_seq_len: 1024,
            seed: 0,
            fusion: FusionMode::Global,
            target_scale: Scale::Bar,
            val_every: 100,
            ckpt: PathBuf::from("model.ckpt"),
            bar_init: BarInit::Pretrained,
            dims: ModelDims::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {0} is not `key = value`")]
    BadLine(usize),
    #[error("duplicate config key: {0}")]
    DuplicateKey(String),
}

/// Every settable key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "lr", "beta1", "beta2", "batch_size", "max_steps", "max_seq_len", "seed", "fusion",
    "target_scale", "val_every", "ckpt", "bar_init", "d_model", "n_embed", "layers", "heads",
    "d_ff", "max_len",
];

impl TrainConfig {
    /// Set one field by config key. Shared by the file parser and CLI flag
    /// overrides so both accept exactly the same keys and values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
            ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: reason.into(),
            }
        }
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| bad(key, value, "unparsable"))
        }
        match key {
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "max_seq_len" => self.max_seq_len = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "fusion" => {
                self.fusion = FusionMode::from_name(value)
                    .ok_or_else(|| bad(key, value, "expected global or local"))?
            }
            "target_scale" => {
                self.target_scale = Scale::from_name(value)
                    .ok_or_else(|| bad(key, value, "expected note, bar, or track"))?
            }
            "val_every" => self.val_every = parse(key, value)?,
            "ckpt" => self.ckpt = PathBuf::from(value),
            "bar_init" => {
                self.bar_init = match value {
                    "pretrained" => BarInit::Pretrained,
                    "scratch" => BarInit::Scratch,
                    _ => return Err(bad(key, value, "expected pretrained or scratch")),
                }
            }
            "d_model" => self.dims.d_model = parse(key, value)?,
            "n_embed" => self.dims.n_embed = parse(key, value)?,
            "layers" => self.dims.layers = parse(key, value)?,
            "heads" => self.dims.heads = parse(key, value)?,
            "d_ff" => self.dims.d_ff = parse(key, value)?,
            "max_len" => self.dims.max_len = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Check cross-field constraints after all keys are applied.
    pub fn finish(self) -> Result<Self, ConfigError> {
        let bad = |key: &str, value: String, reason: &str| ConfigError::BadValue {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        self.dims
            .validate()
            .map_err(|e| bad("d_model", format!("{:?}", self.dims), &e))?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(bad("lr", self.lr.to_string(), "must be positive"));
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(bad(key, v.to_string(), "must be in [0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "0".into(), "must be positive"));
        }
        if self.val_every == 0 {
            return Err(bad("val_every", "0".into(), "must be positive"));
        }
        if self.max_seq_len < 5 {
            return Err(bad(
                "max_seq_len",
                self.max_seq_len.to_string(),
                "too short for a framed sequence",
            ));
        }
        if self.max_seq_len > self.dims.max_len {
            return Err(bad(
                "max_seq_len",
                self.max_seq_len.to_string(),
                "exceeds max_len (positional table size)",
            ));
        }
        Ok(self)
    }

    /// Parse a flat key=value config file. `#` starts a comment; blank lines
    /// are skipped; unknown and duplicate keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::BadLine(i + 1));
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey(key.to_string()));
            }
            seen.push(key.to_string());
            cfg.set(key, value)?;
        }
        cfg.finish()
    }

    /// The effective configuration, one `key = value` line per key, parseable
    /// by [`TrainConfig::parse`].
    pub fn render(&self) -> String {
        let d = &self.dims;
        let pairs: Vec<(&str, String)> = vec![
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("max_seq_len", self.max_seq_len.to_string()),
            ("seed", self.seed.to_string()),
            ("fusion", self.fusion.name().to_string()),
            ("target_scale", self.target_scale.name().to_string()),
            ("val_every", self.val_every.to_string()),
            ("ckpt", self.ckpt.display().to_string()),
            ("bar_init", self.bar_init.name().to_string()),
            ("d_model", d.d_model.to_string()),
            ("n_embed", d.n_embed.to_string()),
            ("layers", d.layers.to_string()),
            ("heads", d.heads.to_string()),
            ("d_ff", d.d_ff.to_string()),
            ("max_len", d.max_len.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
