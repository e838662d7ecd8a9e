//! Log-mel spectrograms via a triangular filterbank on the HTK mel scale.

use serde::{Deserialize, Serialize};

use crate::dsp::stft::{n_frames, stft, Window};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Analysis settings for [`mel_spectrogram`]. Defaults fit 8 kHz desk runs;
/// use `for_rate(24_000)` style constructors for other rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelParams {
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Power floor applied before the log; keep it at or above 1e-6 so the
    /// epsilon inside the magnitude sqrt stays below it.
    pub log_floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        MelParams::for_rate(8000)
    }
}

impl MelParams {
    /// Standard neural-vocoder settings scaled to the sample rate:
    /// fft 1024 / hop 256 / 80 mels at 24 kHz and above, a quarter of that
    /// below 16 kHz.
    pub fn for_rate(sample_rate: u32) -> Self {
        if sample_rate >= 16_000 {
            MelParams {
                fft_size: 1024,
                hop: 256,
                n_mels: 80,
                fmin: 0.0,
                fmax: sample_rate as f64 / 2.0,
                log_floor: 1e-5,
            }
        } else {
            MelParams {
                fft_size: 256,
                hop: 64,
                n_mels: 40,
                fmin: 0.0,
                fmax: sample_rate as f64 / 2.0,
                log_floor: 1e-5,
            }
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "mel fft_size must be a power of two, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "mel hop {} must be in 1..=fft_size {}",
                self.hop, self.fft_size
            )));
        }
        if self.fmax > sample_rate as f64 / 2.0 + 1e-9 {
            return Err(Error::Config(format!(
                "fmax {} above Nyquist {}",
                self.fmax,
                sample_rate as f64 / 2.0
            )));
        }
        if self.fmin < 0.0 || self.fmin >= self.fmax {
            return Err(Error::Config(format!(
                "fmin {} must sit in [0, fmax {})",
                self.fmin, self.fmax
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Log-mel spectrogram: `n_frames x n_mels`, every value >= log(log_floor).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub n_frames: usize,
    pub n_mels: usize,
    pub params: MelParams,
    /// Row-major `[frame][mel]` log-power values.
    pub values: Vec<f64>,
}

impl MelSpec {
    pub fn at(&self, frame: usize, mel: usize) -> f64 {
        self.values[frame * self.n_mels + mel]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank, row-major `[n_mels][n_bins]`, each row normalized
/// to sum to one. Errors when the FFT resolution cannot populate every band.
pub fn mel_filterbank(params: &MelParams, sample_rate: u32) -> Result<Vec<f64>> {
    params.validate(sample_rate)?;
    let n_bins = params.n_bins();
    let mel_lo = hz_to_mel(params.fmin);
    let mel_hi = hz_to_mel(params.fmax);
    let centers: Vec<f64> = (0..params.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (params.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / params.fft_size as f64;
    let mut fb = vec![0.0; params.n_mels * n_bins];
    for m in 0..params.n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        let mut sum = 0.0;
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let rise = (f - lo) / (mid - lo);
            let fall = (hi - f) / (hi - mid);
            let w = rise.min(fall).max(0.0);
            fb[m * n_bins + b] = w;
            sum += w;
        }
        if sum <= 0.0 {
            return Err(Error::Config(format!(
                "mel band {m} (center {:.1} Hz) covers no FFT bins; reduce n_mels ({}) or raise fft_size ({})",
                mid, params.n_mels, params.fft_size
            )));
        }
        for b in 0..n_bins {
            fb[m * n_bins + b] /= sum;
        }
    }
    Ok(fb)
}

/// Band center frequencies in Hz, one per mel row.
pub fn mel_centers(params: &MelParams) -> Vec<f64> {
    let mel_lo = hz_to_mel(params.fmin);
    let mel_hi = hz_to_mel(params.fmax);
    (1..=params.n_mels)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (params.n_mels + 1) as f64))
        .collect()
}

/// Hann-windowed centered STFT -> magnitude -> triangular filterbank ->
/// `log(max(., log_floor))`.
pub fn mel_spectrogram(clip: &AudioClip, params: &MelParams) -> Result<MelSpec> {
    params.validate(clip.sample_rate())?;
    let fb = mel_filterbank(params, clip.sample_rate())?;
    let spec = stft(clip, params.fft_size, params.hop, Window::Hann)?;
    let mags = spec.magnitudes();
    let n_bins = spec.n_bins;
    let mut values = Vec::with_capacity(spec.n_frames * params.n_mels);
    for f in 0..spec.n_frames {
        let frame = &mags[f * n_bins..(f + 1) * n_bins];
        for m in 0..params.n_mels {
            let row = &fb[m * n_bins..(m + 1) * n_bins];
            let e: f64 = row.iter().zip(frame).map(|(w, v)| w * v).sum();
            values.push(e.max(params.log_floor).ln());
        }
    }
    Ok(MelSpec {
        n_frames: spec.n_frames,
        n_mels: params.n_mels,
        params: *params,
        values,
    })
}

/// Expected frame count for a clip length under these params.
pub fn mel_frames(len: usize, params: &MelParams) -> usize {
    n_frames(len, params.fft_size, params.hop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, len: usize, amp: f64) -> AudioClip {
        let samples = (0..len)
            .map(|n| amp * (std::f64::consts::TAU * freq * n as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn zero_signal_sits_on_the_floor() {
        let clip = AudioClip::new(vec![0.0; 4000], 8000).unwrap();
        let params = MelParams::default();
        let mel = mel_spectrogram(&clip, &params).unwrap();
        let floor = params.log_floor.ln();
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn filterbank_rows_sum_to_one() {
        let params = MelParams::default();
        let fb = mel_filterbank(&params, 8000).unwrap();
        let n_bins = params.n_bins();
        for m in 0..params.n_mels {
            let s: f64 = fb[m * n_bins..(m + 1) * n_bins].iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {m} sums to {s}");
        }
    }

    #[test]
    fn sine_lands_in_nearest_band() {
        let params = MelParams::default();
        let clip = sine(1000.0, 8000, 8000, 0.5);
        let mel = mel_spectrogram(&clip, &params).unwrap();
        let centers = mel_centers(&params);
        let want = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 1000.0)
                    .abs()
                    .partial_cmp(&(b.1 - 1000.0).abs())
                    .unwrap()
            })
            .unwrap()
            .0;
        let f = mel.n_frames / 2;
        let got = (0..params.n_mels)
            .max_by(|&a, &b| mel.at(f, a).partial_cmp(&mel.at(f, b)).unwrap())
            .unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn doubling_amplitude_shifts_log_by_ln2() {
        let params = MelParams::default();
        let a = mel_spectrogram(&sine(700.0, 8000, 8000, 0.25), &params).unwrap();
        let b = mel_spectrogram(&sine(700.0, 8000, 8000, 0.5), &params).unwrap();
        let f = a.n_frames / 2;
        // Only meaningful where well above the floor.
        let floor = params.log_floor.ln();
        for m in 0..params.n_mels {
            if a.at(f, m) > floor + 3.0 {
                let diff = b.at(f, m) - a.at(f, m);
                // The magnitude epsilon perturbs quiet bands by ~1e-6.
                assert!((diff - std::f64::consts::LN_2).abs() < 1e-4, "band {m}: {diff}");
            }
        }
    }

    #[test]
    fn appended_silence_preserves_leading_frames() {
        let params = MelParams::default();
        let clip = sine(500.0, 8000, 4000, 0.4);
        let a = mel_spectrogram(&clip, &params).unwrap();
        let mut longer = clip.samples().to_vec();
        longer.extend(vec![0.0; 2000]);
        let b = mel_spectrogram(&AudioClip::new(longer, 8000).unwrap(), &params).unwrap();
        // Frames whose analysis window stays inside the original samples.
        let shared = (4000 - params.fft_size / 2) / params.hop;
        for f in 0..shared {
            for m in 0..params.n_mels {
                assert_eq!(a.at(f, m), b.at(f, m), "frame {f} band {m}");
            }
        }
    }

    #[test]
    fn too_many_mels_rejected() {
        let params = MelParams {
            fft_size: 64,
            hop: 16,
            n_mels: 60,
            ..MelParams::default()
        };
        let err = mel_filterbank(&params, 8000).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn fmax_above_nyquist_rejected() {
        let params = MelParams {
            fmax: 9000.0,
            ..MelParams::default()
        };
        assert!(mel_filterbank(&params, 8000).is_err());
    }
}
