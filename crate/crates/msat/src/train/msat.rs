//! Multi-scale training: the pretrained note and track decoders are frozen;
//! only the bar decoder, the shared decomposition, the fusion parameters,
//! and the heads learn.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::{BarInit, TrainConfig};
use super::data::{prepare_msat, Batch};
use super::loss::loss_and_grad;
use super::{log_line, scale_grad, zero_grads, Shuffler, TrainError};
use crate::midi::CanonicalSong;
use crate::nn::{
    global_alphas, group_of, msat_backward, msat_forward, save_msat, DecoderParams, FreezeMask,
    FusionParams, MsatParams, SingleScaleParams,
};
use crate::rep::Scale;

/// Build the multi-scale model from pretrained single-scale checkpoints.
/// With `bar_init = pretrained`, the bar decoder and the shared
/// decomposition and heads are copied from the bar checkpoint; with
/// `scratch` they are freshly initialized from `cfg.seed` (fusion always
/// starts at zero, an exact uniform average).
pub fn assemble_msat(
    note: &SingleScaleParams,
    track: &SingleScaleParams,
    bar: Option<&SingleScaleParams>,
    cfg: &TrainConfig,
) -> Result<MsatParams, TrainError> {
    for (ckpt, want) in [(note, Scale::Note), (track, Scale::Track)] {
        if ckpt.scale != want {
            return Err(TrainError::ScaleMismatch {
                expected: want.name(),
                found: ckpt.scale.name(),
            });
        }
    }
    if let Some(bar) = bar {
        if bar.scale != Scale::Bar {
            return Err(TrainError::ScaleMismatch {
                expected: Scale::Bar.name(),
                found: bar.scale.name(),
            });
        }
    }
    let dims = note.decoder.dims;
    if track.decoder.dims != dims || bar.is_some_and(|b| b.decoder.dims != dims) {
        return Err(TrainError::DimsMismatch);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fresh = MsatParams::new(cfg.fusion, &dims, &mut rng);
    let (bar_decoder, decompose, heads): (DecoderParams, _, _) = match cfg.bar_init {
        BarInit::Pretrained => {
            let bar = bar.ok_or(TrainError::MissingBarCheckpoint)?;
            (bar.decoder.clone(), bar.decompose.clone(), bar.heads.clone())
        }
        BarInit::Scratch => {
            let [_, fresh_bar, _] = fresh.decoders.clone();
            (fresh_bar, fresh.decompose.clone(), fresh.heads.clone())
        }
    };
    Ok(MsatParams {
        decoders: [note.decoder.clone(), bar_decoder, track.decoder.clone()],
        decompose,
        fusion: FusionParams::new(cfg.fusion, &dims),
        heads,
        freeze: FreezeMask::msat_default(),
    })
}

fn eval_msat(p: &MsatParams, batches: &[Batch]) -> Result<(f64, [f64; 6]), TrainError> {
    let mut total = 0.0;
    let mut fields = [0.0; 6];
    for b in batches {
        let (logits, _) = msat_forward(p, &b.seqs)?;
        let targets = &b.seqs[Scale::Bar as usize].events[1..];
        let (l, f, _) = loss_and_grad(&logits, targets)?;
        total += l;
        for (acc, v) in fields.iter_mut().zip(f) {
            *acc += v;
        }
    }
    let n = batches.len() as f64;
    for v in fields.iter_mut() {
        *v /= n;
    }
    Ok((total / n, fields))
}

fn check_freeze(p: &MsatParams) -> Result<(), TrainError> {
    for (name, param) in p.entries() {
        if p.freeze.is_frozen(group_of(&name)) && param.g.data.iter().any(|&g| g != 0.0) {
            return Err(TrainError::FreezeViolation { name });
        }
    }
    Ok(())
}

fn alpha_column(p: &MsatParams) -> String {
    match &p.fusion {
        FusionParams::Global(g) => {
            let alphas = global_alphas(g);
            let mut out = String::from(" alpha");
            for (f, name) in crate::nn::FIELD_NAMES.iter().enumerate() {
                out.push_str(&format!(
                    " {name} {:.4}/{:.4}/{:.4}",
                    alphas[f][0], alphas[f][1], alphas[f][2]
                ));
            }
            out
        }
        FusionParams::Local(_) => String::new(),
    }
}

/// Train the multi-scale model; write the best-validation checkpoint to
/// `cfg.ckpt` and return it. The freeze invariant is asserted every step.
pub fn train_msat(
    train: &[CanonicalSong],
    valid: &[CanonicalSong],
    note: &SingleScaleParams,
    track: &SingleScaleParams,
    bar: Option<&SingleScaleParams>,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<MsatParams, TrainError> {
    if cfg.target_scale != Scale::Bar {
        return Err(TrainError::ScaleMismatch {
            expected: Scale::Bar.name(),
            found: cfg.target_scale.name(),
        });
    }
    let train_batches = prepare_msat(train, cfg.max_seq_len);
    if train_batches.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let valid_batches = {
        let v = prepare_msat(valid, cfg.max_seq_len);
        if v.is_empty() { train_batches.clone() } else { v }
    };

    let mut params = assemble_msat(note, track, bar, cfg)?;
    let mut adam = {
        let lens: Vec<usize> = params.entries().iter().map(|(_, p)| p.len()).collect();
        Adam::new(cfg.lr, cfg.beta1, cfg.beta2, &lens)
    };
    let mut shuffler = Shuffler::new(
        train_batches.len(),
        ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
    );

    let (val, fields) = eval_msat(&params, &valid_batches)?;
    log_line(log, 0, None, val, &fields, &alpha_column(&params))?;
    let mut best = (val, params.clone());

    let mut window_loss = 0.0;
    let mut window_n = 0usize;
    for step in 1..=cfg.max_steps {
        zero_grads(&mut params.entries_mut());
        let batch = shuffler.next_batch(cfg.batch_size);
        let inv = 1.0 / batch.len() as f64;
        let mut batch_loss = 0.0;
        for &i in &batch {
            let b = &train_batches[i];
            let (logits, cache) = msat_forward(&params, &b.seqs)?;
            let targets = &b.seqs[Scale::Bar as usize].events[1..];
            let (l, _, mut dlogits) = loss_and_grad(&logits, targets)?;
            scale_grad(&mut dlogits, inv);
            msat_backward(&dlogits, &cache, &mut params);
            batch_loss += l * inv;
        }
        if !batch_loss.is_finite() {
            return Err(TrainError::DivergenceDetected { step, loss: batch_loss });
        }
        check_freeze(&params)?;
        let freeze = params.freeze;
        adam.step(&mut params.entries_mut(), freeze);
        window_loss += batch_loss;
        window_n += 1;

        if step % cfg.val_every == 0 || step == cfg.max_steps {
            let (val, fields) = eval_msat(&params, &valid_batches)?;
            log_line(
                log,
                step,
                Some(window_loss / window_n as f64),
                val,
                &fields,
                &alpha_column(&params),
            )?;
            window_loss = 0.0;
            window_n = 0;
            if val < best.0 {
                best = (val, params.clone());
            }
        }
    }

    save_msat(&cfg.ckpt, &best.1)?;
    Ok(best.1)
}
