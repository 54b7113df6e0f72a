//! Autoregressive generation. Both tasks build a bar-order prompt, then
//! repeatedly re-serialize the generated prefix under the note and track
//! orders, run the three decoders, fuse their final-position outputs, and
//! sample the six fields independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::midi::CanonicalSong;
use crate::nn::{
    decoder_forward, decompose, embed, fuse_one, global_alphas, heads_forward, FusionParams,
    Mat, MsatParams, FIELD_NAMES,
};
use crate::rep::{
    deserialize, encode, Event, Scale, ScaledSequence, FIELD_BEAT, FIELD_INSTRUMENT, FIELD_TYPE,
    NULL, NUM_FIELDS, TYPE_EOS, TYPE_INSTRUMENT, TYPE_NOTE, TYPE_SON,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Per-field softmax temperature; must be positive.
    pub temperature: [f64; 6],
    /// Per-field top-k cutoff; must be at least 1.
    pub top_k: [usize; 6],
    /// Longest event sequence sampled before EOS is forced.
    pub max_events: usize,
    pub seed: u64,
    /// Grammar masking of the sampled distributions.
    pub validity_filter: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: [1.0; 6],
            top_k: [32; 6],
            max_events: 1024,
            seed: 0,
            validity_filter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenerationTask {
    /// Task 1: generate a song for a given set of instruments.
    InstrumentInformed { programs: Vec<u8> },
    /// Task 2: continue a prompt song past its first `beats` beats.
    Continuation { prompt: CanonicalSong, beats: u16 },
}

impl GenerationTask {
    pub fn continuation(prompt: CanonicalSong) -> Self {
        GenerationTask::Continuation { prompt, beats: 16 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GenError {
    #[error("prompt of {len} events leaves no room to generate (limit {limit})")]
    PromptTooLong { len: usize, limit: usize },
    #[error("instrument-informed generation needs at least one instrument")]
    NoInstruments,
    #[error("continuation prompt has {have} beats, needs at least {need}")]
    PromptTooShort { have: u16, need: u16 },
}

/// Per-song tallies of the sampler's interventions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenDiagnostics {
    /// Times the validity mask emptied the top-k candidates and sampling fell
    /// back to a wider distribution.
    pub masked_fallbacks: usize,
    /// Times a sampled code broke the grammar and was remapped.
    pub grammar_repairs: usize,
    /// Notes dropped at deserialization (undeclared instrument).
    pub dropped_notes: usize,
}

/// Grammar context for masking one event's fields.
struct MaskContext {
    /// Instrument codes declared in the header.
    declared: Vec<u16>,
    /// Bar index of the last generated note; later notes may not precede its
    /// bar start.
    last_bar: u16,
    /// Continuation tasks forbid new notes before this beat.
    min_beat: u16,
}

impl MaskContext {
    /// Whether `code` is allowed in `field`, given the event type already
    /// sampled for this step.
    fn allows(&self, field: usize, code: u16, ty: u16) -> bool {
        if field == FIELD_TYPE {
            // After SON the grammar admits only notes and the terminator.
            return code == TYPE_NOTE || code == TYPE_EOS;
        }
        if ty != TYPE_NOTE {
            // Structural events carry NULL in every value field.
            return code == NULL;
        }
        if code == NULL {
            return false;
        }
        match field {
            FIELD_BEAT => {
                let beat = code - 1;
                beat >= self.min_beat && beat / 4 >= self.last_bar
            }
            FIELD_INSTRUMENT => self.declared.contains(&code),
            _ => true,
        }
    }
}

/// Sample one code from the tempered, top-k-filtered, optionally masked
/// distribution. A mask that empties the top-k candidates falls back to the
/// full masked distribution, and only if that is empty too to the unmasked
/// one; either fallback is reported.
fn sample_code(
    logits: &[f64],
    temperature: f64,
    top_k: usize,
    allowed: Option<&dyn Fn(u16) -> bool>,
    rng: &mut ChaCha8Rng,
) -> (u16, bool) {
    assert!(temperature > 0.0, "temperature must be positive");
    assert!(top_k >= 1, "top-k must be at least 1");
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let max = logits[order[0]];
    let tempered: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let mut top = vec![0.0; logits.len()];
    for &c in order.iter().take(top_k) {
        top[c] = tempered[c];
    }

    let draw = |probs: &[f64], rng: &mut ChaCha8Rng| -> u16 {
        let total: f64 = probs.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last = c;
            u -= p;
            if u <= 0.0 {
                break;
            }
        }
        last as u16
    };

    let Some(allowed) = allowed else {
        return (draw(&top, rng), false);
    };
    let restrict = |probs: &[f64]| -> Vec<f64> {
        probs
            .iter()
            .enumerate()
            .map(|(c, &p)| if allowed(c as u16) { p } else { 0.0 })
            .collect()
    };
    let masked_top = restrict(&top);
    if masked_top.iter().sum::<f64>() > 0.0 {
        return (draw(&masked_top, rng), false);
    }
    let masked_full = restrict(&tempered);
    if masked_full.iter().sum::<f64>() > 0.0 {
        return (draw(&masked_full, rng), true);
    }
    (draw(&top, rng), true)
}

/// Re-serialize a generated prefix for one scale: structural events stay put,
/// note events sort by the scale's key (stable in generation order).
fn reorder(g: &[Event], scale: Scale) -> Vec<Event> {
    let son = g.iter().position(|e| e.ty() == TYPE_SON).expect("prompt contains SON");
    let mut out = g.to_vec();
    out[son + 1..].sort_by_key(|e| scale.sort_key(e));
    out
}

/// Six next-event logit rows for the current prefix: run each decoder on its
/// own ordering of the prefix and fuse the final-position outputs, the only
/// positions that attend to the whole context.
fn final_logits(model: &MsatParams, g: &[Event]) -> [Vec<f64>; 6] {
    let mut toks: [[Vec<f64>; 6]; 3] = Default::default();
    for (s, scale) in Scale::ALL.iter().enumerate() {
        let events = match scale {
            // The generated sequence is already in bar order.
            Scale::Bar => g.to_vec(),
            _ => reorder(g, *scale),
        };
        let x = embed(&events, &model.decoders[s]).expect("generated codes are in range");
        let (h, _) = decoder_forward(&x, &model.decoders[s]).expect("activations stay finite");
        let h_last = Mat::from_rows(vec![h.row(h.rows - 1).to_vec()]);
        let t = decompose(&h_last, &model.decompose);
        toks[s] = std::array::from_fn(|f| t[f].row(0).to_vec());
    }
    let (fused, _) = fuse_one(&toks, &model.fusion);
    let fused_mats: [Mat; 6] = std::array::from_fn(|f| Mat::from_rows(vec![fused[f].clone()]));
    let logits = heads_forward(&fused_mats, &model.heads);
    std::array::from_fn(|f| logits[f].row(0).to_vec())
}

fn build_prompt(
    task: &GenerationTask,
    limit: usize,
) -> Result<(Vec<Event>, MaskContext), GenError> {
    let (events, min_beat) = match task {
        GenerationTask::InstrumentInformed { programs } => {
            if programs.is_empty() {
                return Err(GenError::NoInstruments);
            }
            let mut programs = programs.clone();
            programs.sort_unstable();
            programs.dedup();
            let mut ev = vec![Event::sos()];
            ev.extend(programs.iter().map(|&p| Event::instrument(p)));
            ev.push(Event::son());
            (ev, 0)
        }
        GenerationTask::Continuation { prompt, beats } => {
            if prompt.length_beats < *beats {
                return Err(GenError::PromptTooShort {
                    have: prompt.length_beats,
                    need: *beats,
                });
            }
            let full = encode(prompt);
            let son = full.son_index();
            let mut ev: Vec<Event> = full.events[..=son].to_vec();
            let mut notes: Vec<Event> = full.events[son + 1..full.len() - 1]
                .iter()
                .copied()
                .filter(|e| e.beat() < *beats)
                .collect();
            notes.sort_by_key(|e| Scale::Bar.sort_key(e));
            ev.extend(notes);
            (ev, *beats)
        }
    };
    if events.len() >= limit {
        return Err(GenError::PromptTooLong { len: events.len(), limit });
    }
    let declared: Vec<u16> = events
        .iter()
        .filter(|e| e.ty() == TYPE_INSTRUMENT)
        .map(|e| e.codes[FIELD_INSTRUMENT])
        .collect();
    let last_bar = events.iter().filter(|e| e.is_note()).map(|e| e.bar()).max().unwrap_or(0);
    Ok((events, MaskContext { declared, last_bar, min_beat }))
}

/// Generate a song. Pure in (model, task, cfg): the same inputs give the
/// same song.
pub fn generate(
    model: &MsatParams,
    task: &GenerationTask,
    cfg: &SamplingConfig,
) -> Result<(CanonicalSong, GenDiagnostics), GenError> {
    let dims = model.dims();
    let limit = cfg.max_events.min(dims.max_len);
    let (mut g, mut ctx) = build_prompt(task, limit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut diag = GenDiagnostics::default();

    loop {
        if g.len() >= limit {
            g.push(Event::eos());
            break;
        }
        let logits = final_logits(model, &g);
        let mut codes = [NULL; NUM_FIELDS];

        // Type first; the value-field masks depend on it.
        let allow_type = |c: u16| ctx.allows(FIELD_TYPE, c, TYPE_NOTE);
        let mask = cfg.validity_filter.then_some(&allow_type as &dyn Fn(u16) -> bool);
        let (ty, fallback) =
            sample_code(&logits[0], cfg.temperature[0], cfg.top_k[0], mask, &mut rng);
        diag.masked_fallbacks += usize::from(fallback);
        let ty = if ty == TYPE_NOTE || ty == TYPE_EOS {
            ty
        } else {
            // Grammar repair: after SON only notes may continue the song.
            diag.grammar_repairs += 1;
            TYPE_NOTE
        };
        codes[FIELD_TYPE] = ty;

        if ty == TYPE_EOS {
            g.push(Event::eos());
            break;
        }
        for f in 1..NUM_FIELDS {
            let allow = |c: u16| ctx.allows(f, c, ty);
            let mask = cfg.validity_filter.then_some(&allow as &dyn Fn(u16) -> bool);
            let (code, fallback) =
                sample_code(&logits[f], cfg.temperature[f], cfg.top_k[f], mask, &mut rng);
            diag.masked_fallbacks += usize::from(fallback);
            codes[f] = if code == NULL {
                // NULL is structural-only; repair to the best legal code.
                diag.grammar_repairs += 1;
                let row = &logits[f];
                (1..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap() as u16
            } else {
                code
            };
        }
        let event = Event { codes };
        ctx.last_bar = ctx.last_bar.max(event.bar());
        g.push(event);
    }

    let seq = ScaledSequence::from_events(Scale::Bar, g);
    let out = deserialize(&seq).expect("generated sequences are framed and typed");
    diag.dropped_notes = out.dropped_notes as usize;
    Ok((out.song, diag))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("attention report needs a global-fusion checkpoint")]
pub struct WrongFusionMode;

/// The 6×3 table of softmaxed global attention weights, rows in token-field
/// order, columns note/bar/track.
pub fn attn_table(model: &MsatParams) -> Result<[[f64; 3]; 6], WrongFusionMode> {
    match &model.fusion {
        FusionParams::Global(g) => Ok(global_alphas(g)),
        FusionParams::Local(_) => Err(WrongFusionMode),
    }
}

/// Text rendering of [`attn_table`].
pub fn attn_report(model: &MsatParams) -> Result<String, WrongFusionMode> {
    let table = attn_table(model)?;
    let mut out = String::from("token        note    bar     track\n");
    for (f, name) in FIELD_NAMES.iter().enumerate() {
        out.push_str(&format!(
            "{name:<11} {:.4}  {:.4}  {:.4}\n",
            table[f][0], table[f][1], table[f][2]
        ));
    }
    Ok(out)
}
