//! Deterministic synthetic speech-like corpus: mixed sinusoids, band-limited
//! noise and slow amplitude envelopes.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::resample::{fir_same, lowpass_taps};
use crate::dsp::wav::save_wav;
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::checkpoint::atomic_write;
use crate::tensor::gaussian;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub duration_secs: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clips: 8,
            duration_secs: 1.0,
            sample_rate: 8000,
            seed: 17,
        }
    }
}

/// Per-clip provenance written into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipInfo {
    pub file: String,
    pub seed: u64,
    pub tones_hz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub clips: Vec<ClipInfo>,
}

/// One clip: 2-3 tones with random phases, low-passed noise, a slow
/// amplitude envelope, peak-normalized to 0.7.
pub fn synth_clip(sample_rate: u32, len: usize, seed: u64) -> (AudioClip, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nyquist = sample_rate as f64 / 2.0;
    let n_tones = rng.gen_range(2..=3);
    let tones: Vec<f64> = (0..n_tones)
        .map(|_| rng.gen_range(150.0..0.7 * nyquist))
        .collect();
    let mut samples = vec![0.0f64; len];
    for &f in &tones {
        let amp = rng.gen_range(0.15..0.35);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        for (n, s) in samples.iter_mut().enumerate() {
            *s += amp
                * (std::f64::consts::TAU * f * n as f64 / sample_rate as f64 + phase).sin();
        }
    }
    // Band-limited noise floor.
    let noise_amp = rng.gen_range(0.01..0.04);
    let noise: Vec<f64> = (0..len).map(|_| noise_amp * gaussian(&mut rng)).collect();
    let taps = lowpass_taps(0.4, 41);
    for (s, n) in samples.iter_mut().zip(fir_same(&noise, &taps)) {
        *s += n;
    }
    // Slow envelope plus a short attack ramp.
    let lfo_hz = rng.gen_range(0.5..2.0);
    let lfo_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let ramp = (sample_rate as usize / 20).min(len);
    for (n, s) in samples.iter_mut().enumerate() {
        let env = 0.85
            + 0.15
                * (std::f64::consts::TAU * lfo_hz * n as f64 / sample_rate as f64 + lfo_phase)
                    .sin();
        let attack = if n < ramp { n as f64 / ramp as f64 } else { 1.0 };
        *s *= env * attack;
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = 0.7 / peak;
        for s in &mut samples {
            *s *= scale;
        }
    }
    (
        AudioClip::new(samples, sample_rate).expect("synthesized clip is valid"),
        tones,
    )
}

/// In-memory corpus in manifest order.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Vec<(AudioClip, ClipInfo)>> {
    if spec.n_clips == 0 {
        return Err(Error::Config("n_clips must be at least 1".into()));
    }
    if spec.duration_secs <= 0.0 {
        return Err(Error::Config("duration must be positive".into()));
    }
    let len = (spec.duration_secs * spec.sample_rate as f64).round() as usize;
    let mut out = Vec::with_capacity(spec.n_clips);
    for i in 0..spec.n_clips {
        // Masked to 63 bits so the seed survives a TOML (i64) round trip.
        let clip_seed = spec
            .seed
            .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            & (i64::MAX as u64);
        let (clip, tones) = synth_clip(spec.sample_rate, len, clip_seed);
        out.push((
            clip,
            ClipInfo {
                file: format!("clip-{i:03}.wav"),
                seed: clip_seed,
                tones_hz: tones,
            },
        ));
    }
    Ok(out)
}

/// Writes WAVs plus `manifest.toml` and returns the manifest.
pub fn write_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    let clips = synth_corpus(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut infos = Vec::with_capacity(clips.len());
    for (clip, info) in &clips {
        save_wav(clip, &out_dir.join(&info.file))?;
        infos.push(info.clone());
    }
    let manifest = Manifest {
        sample_rate: spec.sample_rate,
        duration_secs: spec.duration_secs,
        clips: infos,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    atomic_write(&out_dir.join("manifest.toml"), text.as_bytes())?;
    Ok(manifest)
}

/// Loads the WAVs listed in a corpus manifest, in manifest order.
pub fn load_corpus(dir: &Path) -> Result<Vec<AudioClip>> {
    let manifest_path = dir.join("manifest.toml");
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    manifest
        .clips
        .iter()
        .map(|info| crate::dsp::wav::load_wav(&dir.join(&info.file)))
        .collect()
}

/// Manifest path inside a corpus directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.toml")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic() {
        let spec = SynthSpec::default();
        let a = synth_corpus(&spec).unwrap();
        let b = synth_corpus(&spec).unwrap();
        for ((ca, _), (cb, _)) in a.iter().zip(&b) {
            assert_eq!(ca.samples(), cb.samples());
        }
    }

    #[test]
    fn corpus_has_requested_shape() {
        let spec = SynthSpec {
            n_clips: 8,
            duration_secs: 1.0,
            sample_rate: 8000,
            seed: 3,
        };
        let clips = synth_corpus(&spec).unwrap();
        assert_eq!(clips.len(), 8);
        for (c, _) in &clips {
            assert_eq!(c.len(), 8000);
            assert!(c.peak() <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn spectra_contain_configured_tones() {
        let spec = SynthSpec::default();
        for (clip, info) in synth_corpus(&spec).unwrap() {
            // Naive DFT magnitude at the tone bin vs the median bin.
            let n = 4096.min(clip.len());
            let x = &clip.samples()[..n];
            let mag = |freq: f64| -> f64 {
                let k = freq * n as f64 / clip.sample_rate() as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let ang = -std::f64::consts::TAU * k * t as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            };
            let mut bins: Vec<f64> = (1..n / 2)
                .step_by(8)
                .map(|b| mag(b as f64 * clip.sample_rate() as f64 / n as f64))
                .collect();
            bins.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = bins[bins.len() / 2];
            for &tone in &info.tones_hz {
                assert!(
                    mag(tone) > 5.0 * median,
                    "tone {tone} Hz not prominent in {}",
                    info.file
                );
            }
        }
    }

    #[test]
    fn write_and_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("sigil-synth-{}", std::process::id()));
        let spec = SynthSpec {
            n_clips: 3,
            duration_secs: 0.25,
            sample_rate: 8000,
            seed: 5,
        };
        let manifest = write_corpus(&spec, &dir).unwrap();
        assert_eq!(manifest.clips.len(), 3);
        let clips = load_corpus(&dir).unwrap();
        assert_eq!(clips.len(), 3);
        assert_eq!(clips[0].len(), 2000);
        std::fs::remove_dir_all(&dir).ok();
    }
}
