//! Layer-level forward and backward passes: embeddings with sinusoidal
//! positions, pre-norm decoder blocks (masked multi-head attention plus
//! feed-forward), and the affine primitives they share.
//!
//! Every forward writes the intermediates the matching backward needs into an
//! explicit cache struct; backward accumulates parameter gradients into each
//! [`Param`]'s `g` buffer and returns the gradient with respect to its input.

use thiserror::Error;

use super::mat::Mat;
use super::params::{BlockParams, DecoderParams, Param};
use crate::rep::{Event, NUM_FIELDS, VOCAB_SIZES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("code {code} out of range for field {field}")]
    CodeOutOfRange { field: usize, code: u16 },
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
}

const LN_EPS: f64 = 1e-5;

/// Sinusoidal positional encoding row for position `pos`, width `d`.
pub fn positional_encoding(pos: usize, d: usize) -> Vec<f64> {
    let mut row = vec![0.0; d];
    for i in 0..d / 2 {
        let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
        let angle = pos as f64 * rate;
        row[2 * i] = angle.sin();
        row[2 * i + 1] = angle.cos();
    }
    row
}

/// Event embedding: sum of the six field embeddings plus the positional
/// encoding of the sequence index.
pub fn embed(events: &[Event], p: &DecoderParams) -> Result<Mat, NnError> {
    assert!(events.len() <= p.dims.max_len, "sequence exceeds max_len");
    let d = p.dims.d_model;
    let mut x = Mat::zeros(events.len(), d);
    for (t, e) in events.iter().enumerate() {
        let out = x.row_mut(t);
        for f in 0..NUM_FIELDS {
            let code = e.codes[f];
            if usize::from(code) >= VOCAB_SIZES[f] {
                return Err(NnError::CodeOutOfRange { field: f, code });
            }
            let row = p.embed[f].w.row(usize::from(code));
            for c in 0..d {
                out[c] += row[c];
            }
        }
        for (c, pe) in positional_encoding(t, d).into_iter().enumerate() {
            out[c] += pe;
        }
    }
    Ok(x)
}

/// Scatter the embedding gradient back into the six field tables.
pub fn embed_backward(dx: &Mat, events: &[Event], p: &mut DecoderParams) {
    for (t, e) in events.iter().enumerate() {
        let src = dx.row(t);
        for f in 0..NUM_FIELDS {
            let row = p.embed[f].g.row_mut(usize::from(e.codes[f]));
            for c in 0..row.len() {
                row[c] += src[c];
            }
        }
    }
}

/// y = x @ wᵀ + b.
fn linear(x: &Mat, w: &Param, b: &Param) -> Mat {
    let mut y = x.matmul_bt(&w.w);
    y.add_row(&b.w);
    y
}

/// Backpropagate through `linear`: accumulates dw and db, returns dx.
fn linear_backward(dy: &Mat, x: &Mat, w: &mut Param, b: &mut Param) -> Mat {
    dy.matmul_at_acc(x, &mut w.g);
    dy.col_sum_acc(&mut b.g);
    dy.matmul(&w.w)
}

pub struct LnCache {
    xhat: Mat,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Mat, g: &Param, b: &Param) -> (Mat, LnCache) {
    let d = x.cols;
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for t in 0..x.rows {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(t);
        let out = y.row_mut(t);
        for c in 0..d {
            xh[c] = (row[c] - mean) * rs;
            out[c] = g.w.data[c] * xh[c] + b.w.data[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(dy: &Mat, cache: &LnCache, g: &mut Param, b: &mut Param) -> Mat {
    let d = dy.cols;
    let mut dx = Mat::zeros(dy.rows, d);
    for t in 0..dy.rows {
        let dyr = dy.row(t);
        let xh = cache.xhat.row(t);
        for c in 0..d {
            g.g.data[c] += dyr[c] * xh[c];
            b.g.data[c] += dyr[c];
        }
        // dxhat = dy * g; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for c in 0..d {
            let dxh = dyr[c] * g.w.data[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[c];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        let out = dx.row_mut(t);
        for c in 0..d {
            let dxh = dyr[c] * g.w.data[c];
            out[c] = cache.rstd[t] * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Smooth (tanh) GELU; chosen over ReLU so finite-difference gradient checks
/// are not poisoned by kinks.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub struct BlockCache {
    ln1: LnCache,
    xn1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Per head, the [T×T] causal softmax probabilities.
    probs: Vec<Mat>,
    attcat: Mat,
    ln2: LnCache,
    xn2: Mat,
    hpre: Mat,
    hact: Mat,
}

fn block_forward(x: &Mat, p: &BlockParams, heads: usize) -> (Mat, BlockCache) {
    let t_len = x.rows;
    let d = x.cols;
    let hs = d / heads;
    let scale = 1.0 / (hs as f64).sqrt();

    let (xn1, ln1) = layer_norm(x, &p.ln1_g, &p.ln1_b);
    let q = linear(&xn1, &p.wq, &p.bq);
    let k = linear(&xn1, &p.wk, &p.bk);
    let v = linear(&xn1, &p.wv, &p.bv);

    let mut attcat = Mat::zeros(t_len, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let off = h * hs;
        let mut ph = Mat::zeros(t_len, t_len);
        for t in 0..t_len {
            // Causal: scores only over positions 0..=t.
            let qr = &q.row(t)[off..off + hs];
            let mut max = f64::NEG_INFINITY;
            let mut scores = vec![0.0; t + 1];
            for (t2, s) in scores.iter_mut().enumerate() {
                let kr = &k.row(t2)[off..off + hs];
                *s = qr.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() * scale;
                max = max.max(*s);
            }
            let mut sum = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            let pr = ph.row_mut(t);
            for (t2, s) in scores.iter().enumerate() {
                pr[t2] = s / sum;
            }
            let out = &mut attcat.row_mut(t)[off..off + hs];
            for t2 in 0..=t {
                let w = pr[t2];
                let vr = &v.row(t2)[off..off + hs];
                for c in 0..hs {
                    out[c] += w * vr[c];
                }
            }
        }
        probs.push(ph);
    }
    let attout = linear(&attcat, &p.wo, &p.bo);

    let mut r1 = x.clone();
    r1.add_assign(&attout);

    let (xn2, ln2) = layer_norm(&r1, &p.ln2_g, &p.ln2_b);
    let hpre = linear(&xn2, &p.w1, &p.b1);
    let mut hact = hpre.clone();
    for vv in hact.data.iter_mut() {
        *vv = gelu(*vv);
    }
    let ffout = linear(&hact, &p.w2, &p.b2);

    let mut out = r1.clone();
    out.add_assign(&ffout);

    let cache = BlockCache {
        ln1,
        xn1,
        q,
        k,
        v,
        probs,
        attcat,
        ln2,
        xn2,
        hpre,
        hact,
    };
    (out, cache)
}

fn block_backward(dout: &Mat, cache: &BlockCache, p: &mut BlockParams, heads: usize) -> Mat {
    let t_len = dout.rows;
    let d = dout.cols;
    let hs = d / heads;
    let scale = 1.0 / (hs as f64).sqrt();

    // out = r1 + ff(ln2(r1))
    let mut dhact = linear_backward(dout, &cache.hact, &mut p.w2, &mut p.b2);
    for (g, &x) in dhact.data.iter_mut().zip(&cache.hpre.data) {
        *g *= gelu_grad(x);
    }
    let dxn2 = linear_backward(&dhact, &cache.xn2, &mut p.w1, &mut p.b1);
    let mut dr1 = layer_norm_backward(&dxn2, &cache.ln2, &mut p.ln2_g, &mut p.ln2_b);
    dr1.add_assign(dout);

    // r1 = x + wo(attcat)
    let dattcat = linear_backward(&dr1, &cache.attcat, &mut p.wo, &mut p.bo);

    let mut dq = Mat::zeros(t_len, d);
    let mut dk = Mat::zeros(t_len, d);
    let mut dv = Mat::zeros(t_len, d);
    for h in 0..heads {
        let off = h * hs;
        let ph = &cache.probs[h];
        for t in 0..t_len {
            let dat = &dattcat.row(t)[off..off + hs];
            let pr = ph.row(t);
            // dp and the softmax Jacobian, row t.
            let mut dp = vec![0.0; t + 1];
            let mut dot = 0.0;
            for t2 in 0..=t {
                let vr = &cache.v.row(t2)[off..off + hs];
                dp[t2] = dat.iter().zip(vr).map(|(a, b)| a * b).sum();
                dot += pr[t2] * dp[t2];
            }
            for t2 in 0..=t {
                let ds = pr[t2] * (dp[t2] - dot) * scale;
                let qr = &cache.q.row(t)[off..off + hs];
                let kr = &cache.k.row(t2)[off..off + hs];
                {
                    let dqr = &mut dq.row_mut(t)[off..off + hs];
                    for c in 0..hs {
                        dqr[c] += ds * kr[c];
                    }
                }
                {
                    let dkr = &mut dk.row_mut(t2)[off..off + hs];
                    for c in 0..hs {
                        dkr[c] += ds * qr[c];
                    }
                }
                let w = pr[t2];
                let dvr = &mut dv.row_mut(t2)[off..off + hs];
                for c in 0..hs {
                    dvr[c] += w * dat[c];
                }
            }
        }
    }

    let mut dxn1 = linear_backward(&dq, &cache.xn1, &mut p.wq, &mut p.bq);
    dxn1.add_assign(&linear_backward(&dk, &cache.xn1, &mut p.wk, &mut p.bk));
    dxn1.add_assign(&linear_backward(&dv, &cache.xn1, &mut p.wv, &mut p.bv));

    let mut dx = layer_norm_backward(&dxn1, &cache.ln1, &mut p.ln1_g, &mut p.ln1_b);
    dx.add_assign(&dr1);
    dx
}

pub struct DecoderCache {
    blocks: Vec<BlockCache>,
}

/// Run the decoder stack. `x` is the embedded input; output keeps width d.
pub fn decoder_forward(x: &Mat, p: &DecoderParams) -> Result<(Mat, DecoderCache), NnError> {
    let mut blocks = Vec::with_capacity(p.blocks.len());
    let mut h = x.clone();
    for bp in &p.blocks {
        let (next, cache) = block_forward(&h, bp, p.dims.heads);
        if !next.is_finite() {
            return Err(NnError::NonFiniteActivation("decoder block"));
        }
        blocks.push(cache);
        h = next;
    }
    Ok((h, DecoderCache { blocks }))
}

/// Backward through the stack; returns the gradient at the embedding.
pub fn decoder_backward(dout: &Mat, cache: &DecoderCache, p: &mut DecoderParams) -> Mat {
    let heads = p.dims.heads;
    let mut d = dout.clone();
    for (bc, bp) in cache.blocks.iter().zip(p.blocks.iter_mut()).rev() {
        d = block_backward(&d, bc, bp, heads);
    }
    d
}

/// Decompose a [T×d] hidden sequence into six [T×N] token embeddings via the
/// shared affine map.
pub fn decompose(h: &Mat, p: &super::params::DecomposeParams) -> [Mat; 6] {
    let full = linear(h, &p.w, &p.b);
    let n = full.cols / NUM_FIELDS;
    std::array::from_fn(|f| {
        Mat::from_fn(full.rows, n, |t, c| full.at(t, f * n + c))
    })
}

/// Backward of [`decompose`]; returns dh.
pub fn decompose_backward(
    dtoks: &[Mat; 6],
    h: &Mat,
    p: &mut super::params::DecomposeParams,
) -> Mat {
    let n = dtoks[0].cols;
    let mut dfull = Mat::zeros(h.rows, NUM_FIELDS * n);
    for (f, dt) in dtoks.iter().enumerate() {
        for t in 0..h.rows {
            dfull.row_mut(t)[f * n..(f + 1) * n].copy_from_slice(dt.row(t));
        }
    }
    linear_backward(&dfull, h, &mut p.w, &mut p.b)
}

/// Apply the six output heads to six [T×N] fused token embeddings.
pub fn heads_forward(toks: &[Mat; 6], p: &super::params::HeadsParams) -> [Mat; 6] {
    std::array::from_fn(|f| linear(&toks[f], &p.w[f], &p.b[f]))
}

/// Backward of the heads; returns the six dtok gradients.
pub fn heads_backward(
    dlogits: &[Mat; 6],
    toks: &[Mat; 6],
    p: &mut super::params::HeadsParams,
) -> [Mat; 6] {
    std::array::from_fn(|f| linear_backward(&dlogits[f], &toks[f], &mut p.w[f], &mut p.b[f]))
}
