//! Model-level composition: a single-scale decoder with decompose + heads,
//! and the multi-scale model that runs all three decoders, realigns the note
//! and track hidden states into bar order, fuses per token field, and
//! predicts through one shared set of heads.

use super::fusion::{fuse_backward, fuse_forward, FuseCache};
use super::layers::{
    decoder_backward, decoder_forward, decompose, decompose_backward, embed, embed_backward,
    heads_backward, heads_forward, DecoderCache, NnError,
};
use super::mat::Mat;
use super::params::{MsatParams, SingleScaleParams};
use crate::rep::{realign, Event, LengthMismatch, Scale, ScaledSequence, NUM_FIELDS};

pub struct SingleCache {
    inputs: Vec<Event>,
    dec: DecoderCache,
    h: Mat,
    toks: [Mat; 6],
}

/// Teacher-forced forward over `inputs` (the sequence with its final event
/// dropped). Returns six [T×V_f] logit matrices.
pub fn single_forward(
    p: &SingleScaleParams,
    inputs: &[Event],
) -> Result<([Mat; 6], SingleCache), NnError> {
    let x0 = embed(inputs, &p.decoder)?;
    let (h, dec) = decoder_forward(&x0, &p.decoder)?;
    let toks = decompose(&h, &p.decompose);
    let logits = heads_forward(&toks, &p.heads);
    Ok((
        logits,
        SingleCache { inputs: inputs.to_vec(), dec, h, toks },
    ))
}

pub fn single_backward(dlogits: &[Mat; 6], cache: &SingleCache, p: &mut SingleScaleParams) {
    let dtoks = heads_backward(dlogits, &cache.toks, &mut p.heads);
    let dh = decompose_backward(&dtoks, &cache.h, &mut p.decompose);
    let dx0 = decoder_backward(&dh, &cache.dec, &mut p.decoder);
    embed_backward(&dx0, &cache.inputs, &mut p.decoder);
}

pub struct MsatCache {
    /// Per-scale decoder inputs in that scale's own order.
    inputs: [Vec<Event>; 3],
    dec: [DecoderCache; 3],
    h: [Mat; 3],
    /// Row maps into each scale's hidden states such that
    /// `h[s].gather_rows(&map[s])` is in bar order.
    maps: [Vec<usize>; 3],
    toks: [[Mat; 6]; 3],
    fuse: FuseCache,
    fused: [Mat; 6],
}

/// Map from bar-order positions to scale-`s`-order positions over the shared
/// input prefix (all events except the final one of each serialization).
fn bar_order_map(seq: &ScaledSequence, bar: &ScaledSequence) -> Result<Vec<usize>, LengthMismatch> {
    let t = seq.events.len() - 1;
    let indices: Vec<usize> = (0..t).collect();
    realign(&indices, &seq.alignment[..t], &bar.alignment[..t])
}

/// Run the full multi-scale model on one song's three serializations.
/// `seqs` holds the note, bar, track serializations in [`Scale::ALL`] order;
/// each is used as a length T−1 input prefix (the trailing EOS event is the
/// last event under every ordering, so the prefixes cover the same events).
/// Logits are in bar order against targets `seqs[bar].events[1..]`.
pub fn msat_forward(
    p: &MsatParams,
    seqs: &[ScaledSequence; 3],
) -> Result<([Mat; 6], MsatCache), NnError> {
    let bar = &seqs[Scale::Bar as usize];
    let mut dec: Vec<DecoderCache> = Vec::with_capacity(3);
    let mut h: Vec<Mat> = Vec::with_capacity(3);
    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(3);
    let mut inputs: Vec<Vec<Event>> = Vec::with_capacity(3);
    for (s, seq) in seqs.iter().enumerate() {
        assert_eq!(seq.scale as usize, s, "serializations out of scale order");
        let inp = &seq.events[..seq.events.len() - 1];
        let x = embed(inp, &p.decoders[s])?;
        let (hs, cache) = decoder_forward(&x, &p.decoders[s])?;
        let map = bar_order_map(seq, bar)
            .expect("serializations of one song realign by construction");
        inputs.push(inp.to_vec());
        dec.push(cache);
        h.push(hs);
        maps.push(map);
    }
    let dec: [DecoderCache; 3] = dec.try_into().map_err(|_| ()).unwrap();
    let h: [Mat; 3] = h.try_into().unwrap();
    let maps: [Vec<usize>; 3] = maps.try_into().unwrap();
    let inputs: [Vec<Event>; 3] = inputs.try_into().unwrap();

    let toks: [[Mat; 6]; 3] = std::array::from_fn(|s| {
        let aligned = h[s].gather_rows(&maps[s]);
        decompose(&aligned, &p.decompose)
    });
    let (fused, fuse) = fuse_forward(&toks, &p.fusion);
    let logits = heads_forward(&fused, &p.heads);
    Ok((
        logits,
        MsatCache { inputs, dec, h, maps, toks, fuse, fused },
    ))
}

/// Backward of [`msat_forward`]. Groups marked frozen in `p.freeze` are not
/// descended into: their gradient buffers are left untouched (exactly zero
/// after a `zero_grads`).
pub fn msat_backward(dlogits: &[Mat; 6], cache: &MsatCache, p: &mut MsatParams) {
    let freeze = p.freeze;
    let dfused: [Mat; 6] = if freeze.heads {
        std::array::from_fn(|f| dlogits[f].matmul(&p.heads.w[f].w))
    } else {
        heads_backward(dlogits, &cache.fused, &mut p.heads)
    };

    let dtoks = fuse_backward(&dfused, &cache.toks, &cache.fuse, &mut p.fusion, !freeze.fusion);

    for (s, scale) in Scale::ALL.iter().enumerate() {
        let decoder_frozen = p.freeze.is_frozen(scale.name());
        if decoder_frozen && freeze.decompose {
            continue;
        }
        let aligned = cache.h[s].gather_rows(&cache.maps[s]);
        let dh_aligned = if freeze.decompose {
            // dx only: sum over fields of dtoks[f] @ W[fN..(f+1)N, :].
            let n = p.decompose.w.w.rows / NUM_FIELDS;
            let d = p.decompose.w.w.cols;
            let mut dh = Mat::zeros(aligned.rows, d);
            for f in 0..NUM_FIELDS {
                let w_f = Mat {
                    rows: n,
                    cols: d,
                    data: p.decompose.w.w.data[f * n * d..(f + 1) * n * d].to_vec(),
                };
                dh.add_assign(&dtoks[s][f].matmul(&w_f));
            }
            dh
        } else {
            decompose_backward(&dtoks[s], &aligned, &mut p.decompose)
        };
        if decoder_frozen {
            continue;
        }
        // Scatter bar-order gradients back to this scale's own ordering.
        let mut dh = Mat::zeros(cache.h[s].rows, cache.h[s].cols);
        dh_aligned.scatter_rows_acc(&cache.maps[s], &mut dh);
        let dx0 = decoder_backward(&dh, &cache.dec[s], &mut p.decoders[s]);
        embed_backward(&dx0, &cache.inputs[s], &mut p.decoders[s]);
    }
}
