//! Cross-scale attentive fusion. Per token field, the three scales' token
//! embeddings are mixed by a convex combination: global fusion softmaxes
//! three learned scalars shared across positions; local fusion scores each
//! position's embeddings against a learned 3×N matrix, one row per scale.

use super::mat::Mat;
use super::params::{FusionParams, GlobalFusionParams};
use crate::rep::NUM_FIELDS;

/// Scale weights per field and position, [T×3] per field. Rows always sum
/// to 1.
pub struct FuseCache {
    pub alphas: [Mat; 6],
}

fn softmax3(scores: [f64; 3]) -> [f64; 3] {
    let max = scores[0].max(scores[1]).max(scores[2]);
    let e = [
        (scores[0] - max).exp(),
        (scores[1] - max).exp(),
        (scores[2] - max).exp(),
    ];
    let z = e[0] + e[1] + e[2];
    [e[0] / z, e[1] / z, e[2] / z]
}

/// The global mode's (field × scale) attention table: softmax of each field's
/// three scalars.
pub fn global_alphas(p: &GlobalFusionParams) -> [[f64; 3]; NUM_FIELDS] {
    std::array::from_fn(|f| {
        let row = p.omega.w.row(f);
        softmax3([row[0], row[1], row[2]])
    })
}

/// Fuse per-scale token embeddings `toks[scale][field]` ([T×N] each) into six
/// fused sequences.
pub fn fuse_forward(toks: &[[Mat; 6]; 3], p: &FusionParams) -> ([Mat; 6], FuseCache) {
    let t_len = toks[0][0].rows;
    let n = toks[0][0].cols;
    let mut fused: [Mat; 6] = std::array::from_fn(|_| Mat::zeros(t_len, n));
    let mut alphas: [Mat; 6] = std::array::from_fn(|_| Mat::zeros(t_len, 3));

    for f in 0..NUM_FIELDS {
        for t in 0..t_len {
            let a = match p {
                FusionParams::Global(g) => {
                    let row = g.omega.w.row(f);
                    softmax3([row[0], row[1], row[2]])
                }
                FusionParams::Local(l) => {
                    let mut scores = [0.0; 3];
                    for (s, score) in scores.iter_mut().enumerate() {
                        let w = l.w[f].w.row(s);
                        let h = toks[s][f].row(t);
                        *score = w.iter().zip(h).map(|(a, b)| a * b).sum();
                    }
                    softmax3(scores)
                }
            };
            alphas[f].row_mut(t).copy_from_slice(&a);
            let out = fused[f].row_mut(t);
            for (s, &w) in a.iter().enumerate() {
                let h = toks[s][f].row(t);
                for c in 0..n {
                    out[c] += w * h[c];
                }
            }
        }
    }
    (fused, FuseCache { alphas })
}

/// Backward of [`fuse_forward`]: returns gradients for the per-scale token
/// embeddings; accumulates fusion parameter gradients unless `accumulate` is
/// false (frozen fusion).
pub fn fuse_backward(
    dfused: &[Mat; 6],
    toks: &[[Mat; 6]; 3],
    cache: &FuseCache,
    p: &mut FusionParams,
    accumulate: bool,
) -> [[Mat; 6]; 3] {
    let t_len = dfused[0].rows;
    let n = dfused[0].cols;
    let mut dtoks: [[Mat; 6]; 3] =
        std::array::from_fn(|_| std::array::from_fn(|_| Mat::zeros(t_len, n)));

    for f in 0..NUM_FIELDS {
        // Accumulated d(score) over positions; for global fusion the scores
        // are the shared omega row, so the softmax Jacobian is applied once
        // to the summed dalpha.
        let mut dalpha_total = [0.0; 3];
        for t in 0..t_len {
            let df = dfused[f].row(t);
            let a = cache.alphas[f].row(t);
            let mut dalpha = [0.0; 3];
            for s in 0..3 {
                let h = toks[s][f].row(t);
                dalpha[s] = df.iter().zip(h).map(|(x, y)| x * y).sum();
                // dtoks from the weighted sum itself.
                let dh = dtoks[s][f].row_mut(t);
                for c in 0..n {
                    dh[c] += a[s] * df[c];
                }
            }
            match p {
                FusionParams::Global(_) => {
                    for s in 0..3 {
                        dalpha_total[s] += dalpha[s];
                    }
                }
                FusionParams::Local(l) => {
                    let dot: f64 = (0..3).map(|s| a[s] * dalpha[s]).sum();
                    for s in 0..3 {
                        let dscore = a[s] * (dalpha[s] - dot);
                        let h = toks[s][f].row(t);
                        if accumulate {
                            let dw = l.w[f].g.row_mut(s);
                            for c in 0..n {
                                dw[c] += dscore * h[c];
                            }
                        }
                        let w = l.w[f].w.row(s);
                        let dh = dtoks[s][f].row_mut(t);
                        for c in 0..n {
                            dh[c] += dscore * w[c];
                        }
                    }
                }
            }
        }
        if let FusionParams::Global(g) = p {
            if accumulate && t_len > 0 {
                // Alpha rows are identical across positions in global mode.
                let a = cache.alphas[f].row(0);
                let dot: f64 = (0..3).map(|s| a[s] * dalpha_total[s]).sum();
                let dw = g.omega.g.row_mut(f);
                for s in 0..3 {
                    dw[s] += a[s] * (dalpha_total[s] - dot);
                }
            }
        }
    }
    dtoks
}

/// Fuse a single position (generation uses only the final position of each
/// decoder). Returns the six fused vectors and the six alpha rows.
pub fn fuse_one(
    toks: &[[Vec<f64>; 6]; 3],
    p: &FusionParams,
) -> ([Vec<f64>; 6], [[f64; 3]; 6]) {
    let as_mats: [[Mat; 6]; 3] = std::array::from_fn(|s| {
        std::array::from_fn(|f| Mat::from_rows(vec![toks[s][f].clone()]))
    });
    let (fused, cache) = fuse_forward(&as_mats, p);
    (
        std::array::from_fn(|f| fused[f].row(0).to_vec()),
        std::array::from_fn(|f| {
            let r = cache.alphas[f].row(0);
            [r[0], r[1], r[2]]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{FusionMode, ModelDims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_toks(t_len: usize, n: usize, seed: u64) -> [[Mat; 6]; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::array::from_fn(|_| {
            std::array::from_fn(|_| {
                Mat::from_fn(t_len, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
            })
        })
    }

    #[test]
    fn equal_omegas_average_the_three_scales() {
        let dims = ModelDims::toy();
        let p = FusionParams::new(FusionMode::Global, &dims);
        let toks = random_toks(3, dims.n_embed, 1);
        let (fused, cache) = fuse_forward(&toks, &p);
        for f in 0..NUM_FIELDS {
            for t in 0..3 {
                assert_eq!(cache.alphas[f].row(t), &[1.0 / 3.0; 3]);
                for c in 0..dims.n_embed {
                    let mean =
                        (toks[0][f].at(t, c) + toks[1][f].at(t, c) + toks[2][f].at(t, c)) / 3.0;
                    assert!((fused[f].at(t, c) - mean).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn ln2_omega_gives_half_quarter_quarter() {
        let dims = ModelDims::toy();
        let mut p = FusionParams::new(FusionMode::Global, &dims);
        let FusionParams::Global(g) = &mut p else { unreachable!() };
        for f in 0..NUM_FIELDS {
            g.omega.w.row_mut(f)[0] = 2f64.ln();
        }
        let toks = random_toks(2, dims.n_embed, 2);
        let (_, cache) = fuse_forward(&toks, &p);
        for f in 0..NUM_FIELDS {
            let a = cache.alphas[f].row(0);
            assert!((a[0] - 0.5).abs() < 1e-12);
            assert!((a[1] - 0.25).abs() < 1e-12);
            assert!((a[2] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_are_a_fixed_point_for_any_omega() {
        let dims = ModelDims::toy();
        let mut p = FusionParams::new(FusionMode::Global, &dims);
        let FusionParams::Global(g) = &mut p else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in g.omega.w.data.iter_mut() {
            *v = rng.random::<f64>() * 4.0 - 2.0;
        }
        let one = random_toks(2, dims.n_embed, 4)[0].clone();
        let toks = [one.clone(), one.clone(), one.clone()];
        let (fused, _) = fuse_forward(&toks, &p);
        for f in 0..NUM_FIELDS {
            for (a, b) in fused[f].data.iter().zip(&one[f].data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_w_local_fusion_is_the_mean() {
        let dims = ModelDims::toy();
        let p = FusionParams::new(FusionMode::Local, &dims);
        let toks = random_toks(4, dims.n_embed, 5);
        let (fused, cache) = fuse_forward(&toks, &p);
        for f in 0..NUM_FIELDS {
            for t in 0..4 {
                let a = cache.alphas[f].row(t);
                for s in 0..3 {
                    assert!((a[s] - 1.0 / 3.0).abs() < 1e-15);
                }
                for c in 0..dims.n_embed {
                    let mean =
                        (toks[0][f].at(t, c) + toks[1][f].at(t, c) + toks[2][f].at(t, c)) / 3.0;
                    assert!((fused[f].at(t, c) - mean).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn local_hand_example_gives_half_quarter_quarter() {
        // N = 2, W rows (1,0),(0,0),(0,0); h_note = (ln 2, 0). Scores are
        // (ln 2, 0, 0), so alpha = (0.5, 0.25, 0.25).
        let dims = ModelDims { n_embed: 2, ..ModelDims::toy() };
        let mut p = FusionParams::new(FusionMode::Local, &dims);
        let FusionParams::Local(l) = &mut p else { unreachable!() };
        for f in 0..NUM_FIELDS {
            *l.w[f].w.at_mut(0, 0) = 1.0;
        }
        let mut toks = random_toks(1, 2, 6);
        for f in 0..NUM_FIELDS {
            toks[0][f] = Mat::from_rows(vec![vec![2f64.ln(), 0.0]]);
        }
        let (_, cache) = fuse_forward(&toks, &p);
        for f in 0..NUM_FIELDS {
            let a = cache.alphas[f].row(0);
            assert!((a[0] - 0.5).abs() < 1e-12);
            assert!((a[1] - 0.25).abs() < 1e-12);
            assert!((a[2] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_local_w_preserves_the_argmax_scale() {
        let dims = ModelDims::toy();
        let toks = random_toks(3, dims.n_embed, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut base = FusionParams::new(FusionMode::Local, &dims);
        let FusionParams::Local(l) = &mut base else { unreachable!() };
        for f in 0..NUM_FIELDS {
            for v in l.w[f].w.data.iter_mut() {
                *v = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        let (_, c1) = fuse_forward(&toks, &base);

        let mut scaled = base.clone();
        let FusionParams::Local(l) = &mut scaled else { unreachable!() };
        for f in 0..NUM_FIELDS {
            for v in l.w[f].w.data.iter_mut() {
                *v *= 5.0;
            }
        }
        let (_, c5) = fuse_forward(&toks, &scaled);

        for f in 0..NUM_FIELDS {
            for t in 0..3 {
                let a1 = c1.alphas[f].row(t);
                let a5 = c5.alphas[f].row(t);
                let argmax =
                    |a: &[f64]| (0..3).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
                assert_eq!(argmax(a1), argmax(a5));
                // Sharper: the winning weight does not shrink.
                assert!(a5[argmax(a5)] >= a1[argmax(a1)] - 1e-12);
            }
        }
    }

    #[test]
    fn both_modes_produce_convex_combinations() {
        let dims = ModelDims::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for mode in [FusionMode::Global, FusionMode::Local] {
            let mut p = FusionParams::new(mode, &dims);
            for (_, param) in match &mut p {
                FusionParams::Global(g) => vec![("", &mut g.omega)],
                FusionParams::Local(l) => l.w.iter_mut().map(|w| ("", w)).collect(),
            } {
                for v in param.w.data.iter_mut() {
                    *v = rng.random::<f64>() * 3.0 - 1.5;
                }
            }
            for draw in 0..100 {
                let toks = random_toks(2, dims.n_embed, 100 + draw);
                let (fused, cache) = fuse_forward(&toks, &p);
                for f in 0..NUM_FIELDS {
                    for t in 0..2 {
                        let a = cache.alphas[f].row(t);
                        assert!(a.iter().all(|&w| w >= 0.0));
                        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                        for c in 0..dims.n_embed {
                            let vals =
                                [toks[0][f].at(t, c), toks[1][f].at(t, c), toks[2][f].at(t, c)];
                            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let v = fused[f].at(t, c);
                            assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn global_equal_omega_matches_local_zero_w() {
        let dims = ModelDims::toy();
        let toks = random_toks(3, dims.n_embed, 10);
        let (fg, _) = fuse_forward(&toks, &FusionParams::new(FusionMode::Global, &dims));
        let (fl, _) = fuse_forward(&toks, &FusionParams::new(FusionMode::Local, &dims));
        for f in 0..NUM_FIELDS {
            for (a, b) in fg[f].data.iter().zip(&fl[f].data) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
