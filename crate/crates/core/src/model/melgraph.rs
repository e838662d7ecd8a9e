//! Differentiable log-mel spectrogram.
//!
//! Same math as [`crate::dsp::mel::mel_spectrogram`] — Hann window, centered
//! reflect-padded frames, triangular filterbank, floored log — expressed as
//! graph ops (windowed DFT as two matmuls) so gradients reach the decoded
//! waveform. The two routes agree to ~1e-9; the DSP route doubles as the
//! independent oracle for this one.

use crate::dsp::mel::{mel_filterbank, MelParams};
use crate::dsp::stft::{Window, MAG_EPS};
use crate::error::Result;
use crate::tensor::{Session, Tensor, Var};

pub(crate) struct MelGraph {
    pub params: MelParams,
    /// `[fft, bins]`: window-scaled cosine basis.
    basis_cos: Tensor,
    /// `[fft, bins]`: window-scaled (negated) sine basis.
    basis_sin: Tensor,
    /// `[bins, n_mels]`: transposed filterbank.
    filterbank: Tensor,
}

impl MelGraph {
    pub fn new(params: MelParams, sample_rate: u32) -> Result<Self> {
        let fft = params.fft_size;
        let bins = params.n_bins();
        let window = Window::Hann.taps(fft);
        let mut cos = Tensor::zeros(&[fft, bins]);
        let mut sin = Tensor::zeros(&[fft, bins]);
        for n in 0..fft {
            for k in 0..bins {
                let ang = -std::f64::consts::TAU * (n * k) as f64 / fft as f64;
                cos.data_mut()[n * bins + k] = window[n] * ang.cos();
                sin.data_mut()[n * bins + k] = window[n] * ang.sin();
            }
        }
        let fb = mel_filterbank(&params, sample_rate)?;
        let mut fb_t = Tensor::zeros(&[bins, params.n_mels]);
        for m in 0..params.n_mels {
            for b in 0..bins {
                fb_t.data_mut()[b * params.n_mels + m] = fb[m * bins + b];
            }
        }
        Ok(MelGraph {
            params,
            basis_cos: cos,
            basis_sin: sin,
            filterbank: fb_t,
        })
    }

    /// Waveform `[B, L]` -> log-mel `[B, frames, n_mels]`.
    pub fn forward(&self, s: &Session, wav: &Var) -> Result<Var> {
        let frames = wav.frames(self.params.fft_size, self.params.hop)?;
        let re = frames.matmul(&s.constant(self.basis_cos.clone()))?;
        let im = frames.matmul(&s.constant(self.basis_sin.clone()))?;
        let mag = re
            .square()
            .add(&im.square())?
            .add_scalar(MAG_EPS)
            .sqrt();
        let mel = mag.matmul(&s.constant(self.filterbank.clone()))?;
        Ok(mel.clamp_min(self.params.log_floor).log())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mel::mel_spectrogram;
    use crate::dsp::AudioClip;

    #[test]
    fn graph_route_matches_dsp_route() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(21);
        let samples: Vec<f64> = (0..4000).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let clip = AudioClip::new(samples.clone(), 8000).unwrap();
        let params = MelParams::for_rate(8000);

        let want = mel_spectrogram(&clip, &params).unwrap();

        let graph = MelGraph::new(params, 8000).unwrap();
        let s = Session::frozen();
        let wav = s.input(Tensor::new(vec![1, 4000], samples).unwrap());
        let got = graph.forward(&s, &wav).unwrap().value();

        assert_eq!(got.shape(), &[1, want.n_frames, want.n_mels]);
        let worst = got
            .data()
            .iter()
            .zip(&want.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-8, "routes disagree by {worst}");
    }
}
