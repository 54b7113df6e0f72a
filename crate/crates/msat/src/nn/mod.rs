//! Framework-free neural network core: f64 matrices, decoder-only
//! Transformers with exact analytic gradients, token-field decomposition,
//! cross-scale fusion, output heads, and binary checkpoints.

pub mod checkpoint;
pub mod fusion;
pub mod layers;
pub mod mat;
pub mod model;
pub mod params;

pub use checkpoint::{load, load_msat, load_single, save_msat, save_single, Checkpoint, CheckpointError};
pub use fusion::{fuse_backward, fuse_forward, fuse_one, global_alphas, FuseCache};
pub use layers::{
    decoder_backward, decoder_forward, decompose, decompose_backward, embed, embed_backward,
    heads_backward, heads_forward, positional_encoding, DecoderCache, NnError,
};
pub use mat::Mat;
pub use model::{
    msat_backward, msat_forward, single_backward, single_forward, MsatCache, SingleCache,
};
pub use params::{
    group_of, scale_index, DecoderParams, DecomposeParams, FreezeMask, FusionMode, FusionParams,
    GlobalFusionParams, HeadsParams, LocalFusionParams, ModelDims, MsatParams, Param,
    SingleScaleParams, FIELD_NAMES,
};
