//! Multi-scale attentive Transformer (MSAT) pipeline for multi-instrument
//! symbolic music: MIDI ingestion, six-token event representation at note,
//! bar, and track scales, a framework-free Transformer core with cross-scale
//! attentive fusion, training, generation, and objective metrics.

pub mod gen;
pub mod metrics;
pub mod midi;
pub mod nn;
pub mod rep;
pub mod train;
