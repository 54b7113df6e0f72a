//! Single-scale pretraining: one decoder learns to predict its own
//! serialization, shifted by one.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::TrainConfig;
use super::data::prepare_single;
use super::loss::loss_and_grad;
use super::{log_line, scale_grad, zero_grads, Shuffler, TrainError};
use crate::midi::CanonicalSong;
use crate::nn::{save_single, single_backward, single_forward, SingleScaleParams};
use crate::rep::{Scale, ScaledSequence};

fn eval_single(
    p: &SingleScaleParams,
    seqs: &[ScaledSequence],
) -> Result<(f64, [f64; 6]), TrainError> {
    let mut total = 0.0;
    let mut fields = [0.0; 6];
    for seq in seqs {
        let inputs = &seq.events[..seq.events.len() - 1];
        let (logits, _) = single_forward(p, inputs)?;
        let (l, f, _) = loss_and_grad(&logits, &seq.events[1..])?;
        total += l;
        for (acc, v) in fields.iter_mut().zip(f) {
            *acc += v;
        }
    }
    let n = seqs.len() as f64;
    for v in fields.iter_mut() {
        *v /= n;
    }
    Ok((total / n, fields))
}

/// Train one decoder on `scale`'s serialization of the corpus; write the
/// checkpoint with the best validation loss to `cfg.ckpt` and return it.
/// An empty validation set falls back to validating on the training set.
pub fn train_single_scale(
    train: &[CanonicalSong],
    valid: &[CanonicalSong],
    scale: Scale,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<SingleScaleParams, TrainError> {
    let train_seqs = prepare_single(train, scale, cfg.max_seq_len);
    if train_seqs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let valid_seqs = {
        let v = prepare_single(valid, scale, cfg.max_seq_len);
        if v.is_empty() { train_seqs.clone() } else { v }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = SingleScaleParams::new(scale, &cfg.dims, &mut rng);
    let mut adam = {
        let lens: Vec<usize> = params.entries().iter().map(|(_, p)| p.len()).collect();
        Adam::new(cfg.lr, cfg.beta1, cfg.beta2, &lens)
    };
    let mut shuffler = Shuffler::new(
        train_seqs.len(),
        ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
    );

    let (val, fields) = eval_single(&params, &valid_seqs)?;
    log_line(log, 0, None, val, &fields, "")?;
    let mut best = (val, params.clone());

    let mut window_loss = 0.0;
    let mut window_n = 0usize;
    let freeze = crate::nn::FreezeMask::default();
    for step in 1..=cfg.max_steps {
        zero_grads(&mut params.entries_mut());
        let batch = shuffler.next_batch(cfg.batch_size);
        let inv = 1.0 / batch.len() as f64;
        let mut batch_loss = 0.0;
        for &i in &batch {
            let seq = &train_seqs[i];
            let inputs = &seq.events[..seq.events.len() - 1];
            let (logits, cache) = single_forward(&params, inputs)?;
            let (l, _, mut dlogits) = loss_and_grad(&logits, &seq.events[1..])?;
            scale_grad(&mut dlogits, inv);
            single_backward(&dlogits, &cache, &mut params);
            batch_loss += l * inv;
        }
        if !batch_loss.is_finite() {
            return Err(TrainError::DivergenceDetected { step, loss: batch_loss });
        }
        adam.step(&mut params.entries_mut(), freeze);
        window_loss += batch_loss;
        window_n += 1;

        if step % cfg.val_every == 0 || step == cfg.max_steps {
            let (val, fields) = eval_single(&params, &valid_seqs)?;
            log_line(log, step, Some(window_loss / window_n as f64), val, &fields, "")?;
            window_loss = 0.0;
            window_n = 0;
            if val < best.0 {
                best = (val, params.clone());
            }
        }
    }

    save_single(&cfg.ckpt, &best.1)?;
    Ok(best.1)
}
