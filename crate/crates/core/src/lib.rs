//! Gammatonegram speech features, energy VAD and a small CNN for
//! dysarthric word recognition, speaker identification and
//! intelligibility grading.

pub mod audio;
pub mod dsp;
pub mod error;
pub mod gammatone;
pub mod manifest;
pub mod nn;
pub mod render;
pub mod rng;
pub mod synth;
pub mod tasks;
pub mod vad;

pub use audio::{load_wav, write_wav, AudioClip};
pub use error::{Error, Result};
