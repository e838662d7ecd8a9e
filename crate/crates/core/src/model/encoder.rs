//! Strided convolutional speech encoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::{stride_geometry, Conv1dLayer};
use crate::tensor::{Activation, Param, Session, Var};

/// Downsampling conv stack: waveform `[B, L]` to carrier features
/// `[B, T, speech_dim]` with `T = L / hop_total` (input pre-padded to a
/// whole number of frames).
pub(crate) struct SpeechEncoder {
    input: Conv1dLayer,
    stages: Vec<Conv1dLayer>,
}

impl SpeechEncoder {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let ch = &cfg.encoder_channels;
        let input = Conv1dLayer::new("enc.input", 1, ch[0], 7, 1, 3, rng);
        let stages = cfg
            .encoder_strides
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let (k, p) = stride_geometry(s);
                Conv1dLayer::new(&format!("enc.stage{i}"), ch[i], ch[i + 1], k, s, p, rng)
            })
            .collect();
        SpeechEncoder { input, stages }
    }

    pub fn forward(&self, s: &Session, wav: &Var) -> Result<Var> {
        let shape = wav.shape();
        if shape.len() != 2 || shape[0] == 0 {
            return Err(Error::Dimension(format!(
                "speech encoder expects a non-empty [B, L] batch, got {shape:?}"
            )));
        }
        let (b, l) = (shape[0], shape[1]);
        let mut h = self.input.forward(s, &wav.reshape(&[b, 1, l])?)?;
        for stage in &self.stages {
            h = stage.forward(s, &h.activate(Activation::Elu))?;
        }
        // [B, D, T] -> [B, T, D]
        h.transpose12()
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = self.input.params();
        for stage in &self.stages {
            p.extend(stage.params());
        }
        p
    }
}
