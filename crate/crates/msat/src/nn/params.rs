//! Parameter containers, initialization, and the named-tensor enumeration
//! used by the optimizer, gradient checker, and checkpoint format.
//!
//! Every learnable tensor is a [`Param`] (value plus gradient accumulator)
//! reachable through `entries`/`entries_mut` under a stable dotted name like
//! `bar.block0.attn.wq` or `fusion.omega`. The name's first segment is the
//! parameter group used for freezing.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::mat::Mat;
use crate::rep::{Scale, NUM_FIELDS, VOCAB_SIZES};

/// Names of the six token fields, in field order.
pub const FIELD_NAMES: [&str; NUM_FIELDS] =
    ["type", "beat", "position", "pitch", "duration", "instrument"];

/// One learnable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub w: Mat,
    pub g: Mat,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param { w: Mat::zeros(rows, cols), g: Mat::zeros(rows, cols) }
    }

    pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Param::zeros(rows, cols);
        for v in p.w.data.iter_mut() {
            *v = std * standard_normal(rng);
        }
        p
    }

    fn ones(rows: usize, cols: usize) -> Self {
        let mut p = Param::zeros(rows, cols);
        p.w.fill(1.0);
        p
    }

    pub fn len(&self) -> usize {
        self.w.data.len()
    }
}

/// Box-Muller standard normal; keeps the dependency surface at plain uniform
/// sampling so seeded runs are reproducible from rand_chacha alone.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Decoder width d.
    pub d_model: usize,
    /// Per-token embedding width N (decomposition output slice).
    pub n_embed: usize,
    /// Decoder blocks L.
    pub layers: usize,
    /// Attention heads H; must divide d_model.
    pub heads: usize,
    /// Feed-forward hidden width.
    pub d_ff: usize,
    /// Longest supported sequence (positional encoding table size).
    pub max_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { d_model: 64, n_embed: 64, layers: 2, heads: 4, d_ff: 256, max_len: 1024 }
    }
}

impl ModelDims {
    /// Tiny configuration for finite-difference checks.
    pub fn toy() -> Self {
        ModelDims { d_model: 8, n_embed: 8, layers: 1, heads: 2, d_ff: 16, max_len: 64 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.heads == 0 || self.layers == 0 {
            return Err("d_model, heads, and layers must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return Err(format!(
                "head count {} must divide d_model {}",
                self.heads, self.d_model
            ));
        }
        if self.d_model % 2 != 0 {
            return Err("sinusoidal encoding needs an even d_model".into());
        }
        if self.n_embed == 0 || self.d_ff == 0 || self.max_len < 2 {
            return Err("n_embed and d_ff must be positive, max_len at least 2".into());
        }
        Ok(())
    }
}

/// One pre-norm decoder block: LN → masked multi-head attention → residual,
/// LN → feed-forward → residual.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Param,
    pub ln1_b: Param,
    pub wq: Param,
    pub bq: Param,
    pub wk: Param,
    pub bk: Param,
    pub wv: Param,
    pub bv: Param,
    pub wo: Param,
    pub bo: Param,
    pub ln2_g: Param,
    pub ln2_b: Param,
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

impl BlockParams {
    fn new(dims: &ModelDims, rng: &mut ChaCha8Rng) -> Self {
        let d = dims.d_model;
        let f = dims.d_ff;
        BlockParams {
            ln1_g: Param::ones(1, d),
            ln1_b: Param::zeros(1, d),
            wq: Param::normal(d, d, INIT_STD, rng),
            bq: Param::zeros(1, d),
            wk: Param::normal(d, d, INIT_STD, rng),
            bk: Param::zeros(1, d),
            wv: Param::normal(d, d, INIT_STD, rng),
            bv: Param::zeros(1, d),
            wo: Param::normal(d, d, INIT_STD, rng),
            bo: Param::zeros(1, d),
            ln2_g: Param::ones(1, d),
            ln2_b: Param::zeros(1, d),
            w1: Param::normal(f, d, INIT_STD, rng),
            b1: Param::zeros(1, f),
            w2: Param::normal(d, f, INIT_STD, rng),
            b2: Param::zeros(1, d),
        }
    }

    fn entries<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (name, p) in [
            ("ln1.g", &self.ln1_g),
            ("ln1.b", &self.ln1_b),
            ("attn.wq", &self.wq),
            ("attn.bq", &self.bq),
            ("attn.wk", &self.wk),
            ("attn.bk", &self.bk),
            ("attn.wv", &self.wv),
            ("attn.bv", &self.bv),
            ("attn.wo", &self.wo),
            ("attn.bo", &self.bo),
            ("ln2.g", &self.ln2_g),
            ("ln2.b", &self.ln2_b),
            ("ff.w1", &self.w1),
            ("ff.b1", &self.b1),
            ("ff.w2", &self.w2),
            ("ff.b2", &self.b2),
        ] {
            out.push((format!("{prefix}.{name}"), p));
        }
    }

    fn entries_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (name, p) in [
            ("ln1.g", &mut self.ln1_g),
            ("ln1.b", &mut self.ln1_b),
            ("attn.wq", &mut self.wq),
            ("attn.bq", &mut self.bq),
            ("attn.wk", &mut self.wk),
            ("attn.bk", &mut self.bk),
            ("attn.wv", &mut self.wv),
            ("attn.bv", &mut self.bv),
            ("attn.wo", &mut self.wo),
            ("attn.bo", &mut self.bo),
            ("ln2.g", &mut self.ln2_g),
            ("ln2.b", &mut self.ln2_b),
            ("ff.w1", &mut self.w1),
            ("ff.b1", &mut self.b1),
            ("ff.w2", &mut self.w2),
            ("ff.b2", &mut self.b2),
        ] {
            out.push((format!("{prefix}.{name}"), p));
        }
    }
}

/// One scale's decoder: six field-embedding tables plus L blocks. The
/// positional encoding is sinusoidal and carries no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub dims: ModelDims,
    pub embed: Vec<Param>,
    pub blocks: Vec<BlockParams>,
}

impl DecoderParams {
    pub fn new(dims: &ModelDims, rng: &mut ChaCha8Rng) -> Self {
        dims.validate().expect("invalid model dimensions");
        let embed = VOCAB_SIZES
            .iter()
            .map(|&v| Param::normal(v, dims.d_model, INIT_STD, rng))
            .collect();
        let blocks = (0..dims.layers).map(|_| BlockParams::new(dims, rng)).collect();
        DecoderParams { dims: *dims, embed, blocks }
    }

    pub fn entries<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (f, p) in self.embed.iter().enumerate() {
            out.push((format!("{prefix}.embed.{}", FIELD_NAMES[f]), p));
        }
        for (l, b) in self.blocks.iter().enumerate() {
            b.entries(&format!("{prefix}.block{l}"), out);
        }
    }

    pub fn entries_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (f, p) in self.embed.iter_mut().enumerate() {
            out.push((format!("{prefix}.embed.{}", FIELD_NAMES[f]), p));
        }
        for (l, b) in self.blocks.iter_mut().enumerate() {
            b.entries_mut(&format!("{prefix}.block{l}"), out);
        }
    }
}

/// The shared affine decomposition d → 6·N, split into six token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeParams {
    pub w: Param,
    pub b: Param,
}

impl DecomposeParams {
    pub fn new(dims: &ModelDims, rng: &mut ChaCha8Rng) -> Self {
        DecomposeParams {
            w: Param::normal(NUM_FIELDS * dims.n_embed, dims.d_model, INIT_STD, rng),
            b: Param::zeros(1, NUM_FIELDS * dims.n_embed),
        }
    }

    fn entries<'a>(&'a self, out: &mut Vec<(String, &'a Param)>) {
        out.push(("decompose.w".to_string(), &self.w));
        out.push(("decompose.b".to_string(), &self.b));
    }

    fn entries_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Param)>) {
        out.push(("decompose.w".to_string(), &mut self.w));
        out.push(("decompose.b".to_string(), &mut self.b));
    }
}

/// Six output heads, one affine map N → vocab size per field. Zero-initialized
/// so an untrained model starts at the exact uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadsParams {
    pub w: Vec<Param>,
    pub b: Vec<Param>,
}

impl HeadsParams {
    pub fn new(dims: &ModelDims) -> Self {
        HeadsParams {
            w: VOCAB_SIZES.iter().map(|&v| Param::zeros(v, dims.n_embed)).collect(),
            b: VOCAB_SIZES.iter().map(|&v| Param::zeros(1, v)).collect(),
        }
    }

    fn entries<'a>(&'a self, out: &mut Vec<(String, &'a Param)>) {
        for f in 0..NUM_FIELDS {
            out.push((format!("heads.{}.w", FIELD_NAMES[f]), &self.w[f]));
            out.push((format!("heads.{}.b", FIELD_NAMES[f]), &self.b[f]));
        }
    }

    fn entries_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Param)>) {
        for (f, (w, b)) in self.w.iter_mut().zip(self.b.iter_mut()).enumerate() {
            out.push((format!("heads.{}.w", FIELD_NAMES[f]), w));
            out.push((format!("heads.{}.b", FIELD_NAMES[f]), b));
        }
    }
}

/// Global attentive fusion: per field, three scalars (note, bar, track)
/// softmaxed into scale weights shared by every position.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFusionParams {
    /// [6 fields × 3 scales].
    pub omega: Param,
}

/// Local attentive fusion: per field a 3×N matrix whose row i scores scale
/// i's token embedding at each position.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFusionParams {
    pub w: Vec<Param>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams {
    Global(GlobalFusionParams),
    Local(LocalFusionParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Global,
    Local,
}

impl FusionMode {
    pub fn name(&self) -> &'static str {
        match self {
            FusionMode::Global => "global",
            FusionMode::Local => "local",
        }
    }

    pub fn from_name(name: &str) -> Option<FusionMode> {
        match name {
            "global" => Some(FusionMode::Global),
            "local" => Some(FusionMode::Local),
            _ => None,
        }
    }
}

impl FusionParams {
    /// Both modes start with every attention row at (1/3, 1/3, 1/3): zero
    /// scores softmax to the uniform mixture.
    pub fn new(mode: FusionMode, dims: &ModelDims) -> Self {
        match mode {
            FusionMode::Global => {
                FusionParams::Global(GlobalFusionParams { omega: Param::zeros(NUM_FIELDS, 3) })
            }
            FusionMode::Local => FusionParams::Local(LocalFusionParams {
                w: (0..NUM_FIELDS).map(|_| Param::zeros(3, dims.n_embed)).collect(),
            }),
        }
    }

    pub fn mode(&self) -> FusionMode {
        match self {
            FusionParams::Global(_) => FusionMode::Global,
            FusionParams::Local(_) => FusionMode::Local,
        }
    }

    fn entries<'a>(&'a self, out: &mut Vec<(String, &'a Param)>) {
        match self {
            FusionParams::Global(g) => out.push(("fusion.omega".to_string(), &g.omega)),
            FusionParams::Local(l) => {
                for (f, p) in l.w.iter().enumerate() {
                    out.push((format!("fusion.{}.w", FIELD_NAMES[f]), p));
                }
            }
        }
    }

    fn entries_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Param)>) {
        match self {
            FusionParams::Global(g) => out.push(("fusion.omega".to_string(), &mut g.omega)),
            FusionParams::Local(l) => {
                for (f, p) in l.w.iter_mut().enumerate() {
                    out.push((format!("fusion.{}.w", FIELD_NAMES[f]), p));
                }
            }
        }
    }
}

/// Which parameter groups receive no gradient. A group is the first dotted
/// segment of a parameter name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FreezeMask {
    pub note: bool,
    pub bar: bool,
    pub track: bool,
    pub decompose: bool,
    pub fusion: bool,
    pub heads: bool,
}

impl FreezeMask {
    /// MSAT training freezes the pretrained note and track decoders.
    pub fn msat_default() -> Self {
        FreezeMask { note: true, track: true, ..FreezeMask::default() }
    }

    pub fn is_frozen(&self, group: &str) -> bool {
        match group {
            "note" => self.note,
            "bar" => self.bar,
            "track" => self.track,
            "decompose" => self.decompose,
            "fusion" => self.fusion,
            "heads" => self.heads,
            _ => false,
        }
    }

    pub fn to_bits(self) -> u8 {
        u8::from(self.note)
            | u8::from(self.bar) << 1
            | u8::from(self.track) << 2
            | u8::from(self.decompose) << 3
            | u8::from(self.fusion) << 4
            | u8::from(self.heads) << 5
    }

    pub fn from_bits(bits: u8) -> Self {
        FreezeMask {
            note: bits & 1 != 0,
            bar: bits & 2 != 0,
            track: bits & 4 != 0,
            decompose: bits & 8 != 0,
            fusion: bits & 16 != 0,
            heads: bits & 32 != 0,
        }
    }
}

/// Group name of a dotted parameter name.
pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap()
}

/// A single-scale model: one decoder, the decomposition, six heads.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleScaleParams {
    pub scale: Scale,
    pub decoder: DecoderParams,
    pub decompose: DecomposeParams,
    pub heads: HeadsParams,
}

impl SingleScaleParams {
    pub fn new(scale: Scale, dims: &ModelDims, rng: &mut ChaCha8Rng) -> Self {
        SingleScaleParams {
            scale,
            decoder: DecoderParams::new(dims, rng),
            decompose: DecomposeParams::new(dims, rng),
            heads: HeadsParams::new(dims),
        }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.decoder.dims
    }

    pub fn entries(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.decoder.entries("decoder", &mut out);
        self.decompose.entries(&mut out);
        self.heads.entries(&mut out);
        out
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.decoder.entries_mut("decoder", &mut out);
        self.decompose.entries_mut(&mut out);
        self.heads.entries_mut(&mut out);
        out
    }
}

/// The multi-scale model: three decoders in scale order (note, bar, track),
/// shared decomposition, one fusion stage, six heads.
#[derive(Debug, Clone, PartialEq)]
pub struct MsatParams {
    pub decoders: [DecoderParams; 3],
    pub decompose: DecomposeParams,
    pub fusion: FusionParams,
    pub heads: HeadsParams,
    pub freeze: FreezeMask,
}

impl MsatParams {
    pub fn new(mode: FusionMode, dims: &ModelDims, rng: &mut ChaCha8Rng) -> Self {
        MsatParams {
            decoders: [
                DecoderParams::new(dims, rng),
                DecoderParams::new(dims, rng),
                DecoderParams::new(dims, rng),
            ],
            decompose: DecomposeParams::new(dims, rng),
            fusion: FusionParams::new(mode, dims),
            heads: HeadsParams::new(dims),
            freeze: FreezeMask::msat_default(),
        }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.decoders[0].dims
    }

    pub fn decoder(&self, scale: Scale) -> &DecoderParams {
        &self.decoders[scale_index(scale)]
    }

    pub fn entries(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, d) in self.decoders.iter().enumerate() {
            d.entries(Scale::ALL[i].name(), &mut out);
        }
        self.decompose.entries(&mut out);
        self.fusion.entries(&mut out);
        self.heads.entries(&mut out);
        out
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (i, d) in self.decoders.iter_mut().enumerate() {
            d.entries_mut(Scale::ALL[i].name(), &mut out);
        }
        self.decompose.entries_mut(&mut out);
        self.fusion.entries_mut(&mut out);
        self.heads.entries_mut(&mut out);
        out
    }
}

pub fn scale_index(scale: Scale) -> usize {
    match scale {
        Scale::Note => 0,
        Scale::Bar => 1,
        Scale::Track => 2,
    }
}
