//! Summed per-field cross-entropy, averaged over sequence positions.

use crate::nn::Mat;
use crate::rep::{Event, NUM_FIELDS, VOCAB_SIZES};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("logit shape mismatch on field {field}: {rows}x{cols} for {targets} targets")]
pub struct ShapeMismatch {
    pub field: usize,
    pub rows: usize,
    pub cols: usize,
    pub targets: usize,
}

fn check_shapes(logits: &[Mat; 6], targets: &[Event]) -> Result<(), ShapeMismatch> {
    for (f, m) in logits.iter().enumerate() {
        if m.rows != targets.len() || m.cols != VOCAB_SIZES[f] {
            return Err(ShapeMismatch {
                field: f,
                rows: m.rows,
                cols: m.cols,
                targets: targets.len(),
            });
        }
    }
    Ok(())
}

/// Mean over positions of the summed six-field negative log-likelihood of
/// the target codes. Structural events contribute through their NULL codes,
/// which are ordinary vocabulary entries.
pub fn loss(logits: &[Mat; 6], targets: &[Event]) -> Result<f64, ShapeMismatch> {
    let (total, _, _) = loss_and_grad(logits, targets)?;
    Ok(total)
}

/// Loss plus per-field means and dlogits (already scaled by 1/T so that the
/// gradient matches the mean-over-positions loss).
pub fn loss_and_grad(
    logits: &[Mat; 6],
    targets: &[Event],
) -> Result<(f64, [f64; 6], [Mat; 6]), ShapeMismatch> {
    check_shapes(logits, targets)?;
    let t_len = targets.len();
    let inv_t = 1.0 / t_len as f64;
    let mut per_field = [0.0; 6];
    let mut dlogits: [Mat; 6] =
        std::array::from_fn(|f| Mat::zeros(t_len, VOCAB_SIZES[f]));
    for f in 0..NUM_FIELDS {
        for t in 0..t_len {
            let row = logits[f].row(t);
            let target = usize::from(targets[t].codes[f]);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in row {
                sum += (v - max).exp();
            }
            let lse = max + sum.ln();
            per_field[f] += lse - row[target];
            let drow = dlogits[f].row_mut(t);
            for (c, &v) in row.iter().enumerate() {
                drow[c] = (v - max).exp() / sum * inv_t;
            }
            drow[target] -= inv_t;
        }
        per_field[f] *= inv_t;
    }
    Ok((per_field.iter().sum(), per_field, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn targets3() -> Vec<Event> {
        vec![
            Event::instrument(0),
            Event::son(),
            Event::note(0, 0, 60, 12, 0),
        ]
    }

    #[test]
    fn certain_logits_give_zero_loss() {
        let targets = targets3();
        // A huge margin on the target code stands in for probability one.
        let logits: [Mat; 6] = std::array::from_fn(|f| {
            Mat::from_fn(3, VOCAB_SIZES[f], |t, c| {
                if c == usize::from(targets[t].codes[f]) { 1e4 } else { 0.0 }
            })
        });
        let l = loss(&logits, &targets).unwrap();
        assert!(l.abs() < 1e-9, "loss {l}");
    }

    #[test]
    fn uniform_logits_give_sum_of_ln_vocab() {
        let targets = targets3();
        let logits: [Mat; 6] = std::array::from_fn(|f| Mat::zeros(3, VOCAB_SIZES[f]));
        let l = loss(&logits, &targets).unwrap();
        let expected: f64 = VOCAB_SIZES.iter().map(|&v| (v as f64).ln()).sum();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn random_logits_match_log_sum_exp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let targets = targets3();
        let logits: [Mat; 6] = std::array::from_fn(|f| {
            Mat::from_fn(3, VOCAB_SIZES[f], |_, _| rng.random::<f64>() * 6.0 - 3.0)
        });
        let l = loss(&logits, &targets).unwrap();

        // Oracle: direct probability normalization per row.
        let mut expected = 0.0;
        for f in 0..NUM_FIELDS {
            for t in 0..3 {
                let row = logits[f].row(t);
                let z: f64 = row.iter().map(|v| v.exp()).sum();
                let p = row[usize::from(targets[t].codes[f])].exp() / z;
                expected -= p.ln();
            }
        }
        expected /= 3.0;
        assert!((l - expected).abs() < 1e-10, "{l} vs {expected}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let targets = targets3();
        let mut logits: [Mat; 6] = std::array::from_fn(|f| {
            Mat::from_fn(3, VOCAB_SIZES[f], |_, _| rng.random::<f64>() - 0.5)
        });
        let (_, _, grad) = loss_and_grad(&logits, &targets).unwrap();
        let eps = 1e-6;
        for f in 0..NUM_FIELDS {
            for probe in [(0usize, 0usize), (1, 2), (2, VOCAB_SIZES[f] - 1)] {
                let (t, c) = probe;
                let orig = logits[f].at(t, c);
                *logits[f].at_mut(t, c) = orig + eps;
                let lp = loss(&logits, &targets).unwrap();
                *logits[f].at_mut(t, c) = orig - eps;
                let lm = loss(&logits, &targets).unwrap();
                *logits[f].at_mut(t, c) = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!((grad[f].at(t, c) - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let targets = targets3();
        let mut logits: [Mat; 6] = std::array::from_fn(|f| Mat::zeros(3, VOCAB_SIZES[f]));
        logits[2] = Mat::zeros(2, VOCAB_SIZES[2]);
        assert!(loss(&logits, &targets).is_err());
    }
}
