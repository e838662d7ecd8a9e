//! Transposed-conv speech decoder mirroring the encoder strides.

use rand::Rng;

use crate::error::Result;
use crate::model::config::ModelConfig;
use crate::model::layers::{stride_geometry, Conv1dLayer, ConvTranspose1dLayer};
use crate::tensor::{Activation, Param, Session, Var};

/// Upsampling stack: `[B, T, speech_dim]` to waveform `[B, T * hop_total]`,
/// bounded to (-1, 1) by a final tanh.
pub(crate) struct SpeechDecoder {
    stages: Vec<ConvTranspose1dLayer>,
    output: Conv1dLayer,
}

impl SpeechDecoder {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let ch = &cfg.encoder_channels;
        let n = cfg.encoder_strides.len();
        let stages = (0..n)
            .rev()
            .map(|i| {
                let s = cfg.encoder_strides[i];
                let (k, p) = stride_geometry(s);
                ConvTranspose1dLayer::new(
                    &format!("dec.stage{}", n - 1 - i),
                    ch[i + 1],
                    ch[i],
                    k,
                    s,
                    p,
                    rng,
                )
            })
            .collect();
        let output = Conv1dLayer::new("dec.output", ch[0], 1, 7, 1, 3, rng);
        SpeechDecoder { stages, output }
    }

    pub fn forward(&self, s: &Session, features: &Var) -> Result<Var> {
        // [B, T, D] -> [B, D, T]
        let mut h = features.transpose12()?;
        for stage in &self.stages {
            h = stage.forward(s, &h)?.activate(Activation::Elu);
        }
        let wav = self.output.forward(s, &h)?.activate(Activation::Tanh);
        let shape = wav.shape();
        wav.reshape(&[shape[0], shape[2]])
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = Vec::new();
        for stage in &self.stages {
            p.extend(stage.params());
        }
        p.extend(self.output.params());
        p
    }
}
