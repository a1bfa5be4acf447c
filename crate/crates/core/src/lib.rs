//! Recognition of tactile interactions from the sound they make on a hard
//! robot shell.
//!
//! The crate covers the whole chain: WAV ingest and dataset manifests
//! ([`audio_io`]), signal conditioning ([`preprocess`]), log-magnitude
//! spectrograms ([`spectrogram`]), handcrafted descriptors ([`features`]),
//! a synthetic touch-sound generator ([`synth`]), a small CNN trained from
//! scratch ([`model`]) and confusion-matrix evaluation with class merging
//! ([`eval`]). The `touchsound` binary drives all of it through [`cli`].

pub mod audio_io;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod spectrogram;
pub mod synth;

pub use audio_io::{AudioClip, DatasetManifest, ManifestEntry, Split, TouchLabel};
pub use error::{Error, Result};
pub use pipeline::SignalPipeline;
