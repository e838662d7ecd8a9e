//! Architectural and training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::dsp::mel::MelParams;
use crate::error::{Error, Result};

/// Loss weighting. The adversarial path is off by default at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// L1 between log-mel spectrograms of carrier and reconstruction.
    pub mel: f64,
    /// L1 between waveforms; drives phase-exact reconstruction, which the
    /// phase-blind mel term cannot.
    pub waveform: f64,
    /// Cross-entropy on recovered watermark digits.
    pub watermark: f64,
    /// Commitment term keeping encoder output near its quantization.
    pub commitment: f64,
    pub adversarial: f64,
    pub feature_match: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mel: 45.0,
            waveform: 60.0,
            watermark: 1.0,
            commitment: 0.25,
            adversarial: 1.0,
            feature_match: 2.0,
        }
    }
}

/// Everything needed to rebuild a model bit-for-bit: dims, strides, heads,
/// imprint iterations, quantizer geometry, mel analysis, loss weights, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sample_rate: u32,
    /// Downsampling factor per encoder stage; the product is the hop between
    /// feature frames.
    pub encoder_strides: Vec<usize>,
    /// Output channels of the input conv followed by each strided stage;
    /// the last entry must equal `speech_dim`.
    pub encoder_channels: Vec<usize>,
    /// Carrier feature dimension (queries in the imprint units).
    pub speech_dim: usize,
    /// Watermark feature dimension (keys/values in the imprint units).
    pub watermark_dim: usize,
    pub n_heads: usize,
    /// How many cross-attention imprint units run in sequence.
    pub imprint_iters: usize,
    /// Share one set of imprint weights across iterations.
    #[serde(default)]
    pub share_imprint_weights: bool,
    /// Watermark message: `message_digits` digits in base `message_base`.
    pub message_digits: usize,
    pub message_base: u8,
    pub n_codebooks: usize,
    pub codebook_size: usize,
    /// EMA decay for codebook learning.
    #[serde(default = "default_ema_decay")]
    pub ema_decay: f64,
    pub mel: MelParams,
    /// Base channel count of the extractor CNN.
    #[serde(default = "default_extractor_channels")]
    pub extractor_channels: usize,
    #[serde(default)]
    pub loss_weights: LossWeights,
    pub seed: u64,
}

fn default_ema_decay() -> f64 {
    0.99
}

fn default_extractor_channels() -> usize {
    16
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Desk-scale configuration: 8 kHz, 50 Hz frames, 64-dim features,
    /// two 64-entry codebooks. Small enough to overfit on a CPU in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            sample_rate: 8000,
            encoder_strides: vec![2, 4, 4, 5],
            encoder_channels: vec![16, 16, 32, 48, 64],
            speech_dim: 64,
            watermark_dim: 64,
            n_heads: 4,
            imprint_iters: 2,
            share_imprint_weights: false,
            message_digits: 4,
            message_base: 16,
            n_codebooks: 2,
            codebook_size: 64,
            ema_decay: 0.99,
            mel: MelParams::for_rate(8000),
            extractor_channels: 16,
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }

    /// Published-scale geometry: 24 kHz, 75 Hz frames, 512-dim features,
    /// 1024-entry codebooks. Useful for bandwidth/capacity arithmetic; far
    /// too heavy to train here.
    pub fn full_scale() -> Self {
        ModelConfig {
            sample_rate: 24_000,
            encoder_strides: vec![2, 4, 5, 8],
            encoder_channels: vec![32, 64, 128, 256, 512],
            speech_dim: 512,
            watermark_dim: 512,
            n_heads: 8,
            imprint_iters: 2,
            share_imprint_weights: false,
            message_digits: 4,
            message_base: 16,
            n_codebooks: 4,
            codebook_size: 1024,
            ema_decay: 0.99,
            mel: MelParams::for_rate(24_000),
            extractor_channels: 32,
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }

    /// Total downsampling factor: samples per feature frame.
    pub fn hop_total(&self) -> usize {
        self.encoder_strides.iter().product()
    }

    /// Feature frames per second; the sample rate must divide evenly.
    pub fn frame_rate(&self) -> u32 {
        self.sample_rate / self.hop_total() as u32
    }

    /// Message information content in bits: `m * log2(b)`.
    pub fn capacity_bits(&self) -> f64 {
        self.message_digits as f64 * (self.message_base as f64).log2()
    }

    /// Codec bandwidth in bits per second:
    /// `N_C * log2(codebook_size) * frame_rate`.
    pub fn bandwidth_bps(&self) -> f64 {
        self.n_codebooks as f64 * (self.codebook_size as f64).log2() * self.frame_rate() as f64
    }

    /// Feature frames for a clip of `len` samples (right-padded to a whole
    /// number of frames).
    pub fn n_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop_total())
    }

    /// Collects every invalid field at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.sample_rate == 0 {
            problems.push("sample_rate: must be positive".to_string());
        }
        if self.encoder_strides.is_empty() || self.encoder_strides.iter().any(|&s| s == 0) {
            problems.push("encoder_strides: need at least one positive stride".to_string());
        }
        if self.encoder_channels.len() != self.encoder_strides.len() + 1 {
            problems.push(format!(
                "encoder_channels: need strides+1 = {} entries, got {}",
                self.encoder_strides.len() + 1,
                self.encoder_channels.len()
            ));
        }
        if self.encoder_channels.last() != Some(&self.speech_dim) {
            problems.push(format!(
                "encoder_channels: last entry must equal speech_dim {}",
                self.speech_dim
            ));
        }
        if self.speech_dim == 0 || self.n_heads == 0 || self.speech_dim % self.n_heads != 0 {
            problems.push(format!(
                "speech_dim {} must be a positive multiple of n_heads {}",
                self.speech_dim, self.n_heads
            ));
        }
        if self.message_digits == 0 {
            problems.push("message_digits: must be at least 1".to_string());
        }
        if self.message_base < 2 {
            problems.push("message_base: must be at least 2".to_string());
        }
        if self.watermark_dim == 0
            || self.message_digits == 0
            || self.watermark_dim % self.message_digits.max(1) != 0
        {
            problems.push(format!(
                "watermark_dim {} must be a positive multiple of message_digits {}",
                self.watermark_dim, self.message_digits
            ));
        }
        if self.imprint_iters == 0 {
            problems.push("imprint_iters: must be at least 1".to_string());
        }
        if self.n_codebooks == 0 {
            problems.push("n_codebooks: must be at least 1".to_string());
        }
        if self.codebook_size < 2 {
            problems.push("codebook_size: must be at least 2".to_string());
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            problems.push(format!("ema_decay {} not in (0, 1)", self.ema_decay));
        }
        let hop = self.hop_total().max(1);
        if self.sample_rate as usize % hop != 0 {
            problems.push(format!(
                "sample_rate {} must be divisible by the stride product {hop} for an integral frame rate",
                self.sample_rate
            ));
        }
        if self.extractor_channels == 0 {
            problems.push("extractor_channels: must be positive".to_string());
        }
        if let Err(e) = self.mel.validate(self.sample_rate) {
            problems.push(format!("mel: {e}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
