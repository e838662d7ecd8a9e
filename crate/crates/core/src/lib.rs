//! Desk-scale neural speech codec with an integrated numerical watermark.
//!
//! The watermark is fused into the carrier features by iterative
//! cross-attention before residual vector quantization, survives the
//! compress/reconstruct cycle plus simulated attacks, and is recovered from
//! the mel spectrogram of the decoded waveform. Everything — tensor engine,
//! DSP, model, quantizer, training loop and evaluation harness — is built
//! for CPU-only experiments that fit on a desk.

pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod quantizer;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
