//! Two-phase training: single-scale pretraining (one decoder predicting its
//! own serialization) and multi-scale training with frozen note and track
//! decoders.

pub mod adam;
pub mod config;
pub mod data;
pub mod gradcheck;
pub mod loss;
mod msat;
mod single;

pub use adam::{Adam, ADAM_EPS, CLIP_NORM};
pub use config::{BarInit, ConfigError, TrainConfig, CONFIG_KEYS};
pub use data::{prepare_msat, prepare_single, segment_song, Batch};
pub use gradcheck::{grad_check_msat, grad_check_single, GradCheckReport, GroupReport};
pub use loss::{loss, loss_and_grad, ShapeMismatch};
pub use msat::{assemble_msat, train_msat};
pub use single::train_single_scale;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Mat, NnError, Param};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no usable training sequences")]
    EmptyCorpus,
    #[error("training diverged at step {step} (loss {loss})")]
    DivergenceDetected { step: usize, loss: f64 },
    #[error("frozen parameter {name} received a nonzero gradient")]
    FreezeViolation { name: String },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    ScaleMismatch { expected: &'static str, found: &'static str },
    #[error("bar_init = pretrained needs a bar checkpoint")]
    MissingBarCheckpoint,
    #[error("checkpoint dimensions disagree")]
    DimsMismatch,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] ShapeMismatch),
    #[error("cannot write checkpoint: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn zero_grads(entries: &mut [(String, &mut Param)]) {
    for (_, p) in entries {
        p.g.fill(0.0);
    }
}

pub(crate) fn scale_grad(dlogits: &mut [Mat; 6], factor: f64) {
    for m in dlogits.iter_mut() {
        for v in m.data.iter_mut() {
            *v *= factor;
        }
    }
}

/// Deterministic epoch shuffling over example indices.
pub(crate) struct Shuffler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Shuffler {
    pub fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut s = Shuffler { order: (0..n).collect(), pos: 0, rng };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn next_batch(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One validation log line: step, train loss (absent at step 0), valid loss,
/// per-field valid losses, then any extra columns (the fused attention
/// weights in global mode).
pub(crate) fn log_line(
    log: &mut dyn std::io::Write,
    step: usize,
    train: Option<f64>,
    valid: f64,
    fields: &[f64; 6],
    extra: &str,
) -> std::io::Result<()> {
    let train = match train {
        Some(t) => format!("{t:.6}"),
        None => "-".to_string(),
    };
    write!(log, "step {step} train {train} valid {valid:.6} fields")?;
    for (name, v) in crate::nn::FIELD_NAMES.iter().zip(fields) {
        write!(log, " {name} {v:.4}")?;
    }
    writeln!(log, "{extra}")
}
