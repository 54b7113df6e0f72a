//! Adaptive moment estimation with bias correction and global-norm gradient
//! clipping. Frozen parameter groups are excluded from the norm, the clip,
//! and the update.

use crate::nn::{group_of, FreezeMask, Param};

pub const ADAM_EPS: f64 = 1e-8;
pub const CLIP_NORM: f64 = 1.0;

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    step: u64,
    /// First and second moments per entry, in `entries_mut` order.
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, entry_lens: &[usize]) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            step: 0,
            m: entry_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: entry_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Global gradient norm over unfrozen entries.
    pub fn grad_norm(entries: &[(String, &mut Param)], freeze: FreezeMask) -> f64 {
        let mut sq = 0.0;
        for (name, p) in entries {
            if freeze.is_frozen(group_of(name)) {
                continue;
            }
            sq += p.g.data.iter().map(|g| g * g).sum::<f64>();
        }
        sq.sqrt()
    }

    /// Clip unfrozen gradients to [`CLIP_NORM`], then apply one update.
    pub fn step(&mut self, entries: &mut [(String, &mut Param)], freeze: FreezeMask) {
        assert_eq!(entries.len(), self.m.len(), "optimizer built for another model");
        let norm = Self::grad_norm(entries, freeze);
        let scale = if norm > CLIP_NORM { CLIP_NORM / norm } else { 1.0 };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (name, p)) in entries.iter_mut().enumerate() {
            if freeze.is_frozen(group_of(name)) {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.w.data.iter_mut().enumerate() {
                let g = p.g.data[j] * scale;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}
