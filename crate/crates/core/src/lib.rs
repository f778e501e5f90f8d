//! Desk-scale spike sorting with two-path neural fingerprints.
//!
//! The crate synthesizes ground-truthed multi-channel extracellular recordings
//! from a fractal surrounding-neuron model, detects and aligns spikes, builds a
//! fine (waveform) plus global-local (cross-channel) fingerprint per spike, and
//! matches fingerprints against a fingerprint lookup table that lives inside a
//! 32,768-bit budget, using negative-selection detectors to reject noise.
//!
//! Module map:
//!
//! - [`neuromodel`]: fractal neuron scene, calcium-dependent weight dynamics.
//! - [`synth`]: recording renderer, file formats, dataset writer.
//! - [`detect`]: adaptive-threshold detection and pivot alignment.
//! - [`fingerprint`]: fine and global-local fingerprints, 33-byte codes.
//! - [`matching`]: the fingerprint lookup table and AIS matcher.
//! - [`eval`]: truth alignment, {FPR, TPR} metrics, sweeps and comparisons.
//! - [`pipeline`]: glue that runs one recording end to end.

pub mod canonical_json;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod matching;
pub mod neuromodel;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
