//! Waveform I/O, spectral transforms and the attack simulator.

pub mod attack;
pub mod fft;
pub mod mel;
pub mod resample;
pub mod stft;
pub mod wav;

pub use attack::{apply_attack, AttackKind, AttackSpec};
pub use mel::{mel_filterbank, mel_spectrogram, MelParams, MelSpec};
pub use resample::{low_pass, resample};
pub use stft::{stft, ComplexSpectrogram, Window};
pub use wav::{load_wav, save_wav};

use crate::error::{Error, Result};

/// Mono PCM audio in `[-1, 1]` at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Validates range, finiteness and non-emptiness.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Dimension("empty audio clip".into()));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::Dimension("non-finite sample in audio clip".into()));
        }
        if samples.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::Dimension(
                "sample outside [-1, 1]; use AudioClip::clamped for signals that may clip".into(),
            ));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    /// Clamps out-of-range samples into `[-1, 1]` and reports how many were
    /// touched. Clipping is never silent.
    pub fn clamped(mut samples: Vec<f64>, sample_rate: u32) -> Result<(Self, usize)> {
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::Dimension("non-finite sample in audio clip".into()));
        }
        let mut clipped = 0usize;
        for v in &mut samples {
            if v.abs() > 1.0 {
                *v = v.clamp(-1.0, 1.0);
                clipped += 1;
            }
        }
        Ok((AudioClip::new(samples, sample_rate)?, clipped))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square power.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same contents truncated to `len` samples.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.samples.len() {
            return Err(Error::Dimension(format!(
                "cannot truncate {}-sample clip to {len}",
                self.samples.len()
            )));
        }
        AudioClip::new(self.samples[..len].to_vec(), self.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(AudioClip::new(vec![], 8000).is_err());
        assert!(AudioClip::new(vec![1.5], 8000).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 8000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn clamped_counts_clipped_samples() {
        let (clip, n) = AudioClip::clamped(vec![0.5, 1.5, -2.0], 8000).unwrap();
        assert_eq!(n, 2);
        assert_eq!(clip.samples(), &[0.5, 1.0, -1.0]);
    }
}
