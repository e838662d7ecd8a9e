//! Windowed-sinc resampling and FIR low-pass filtering.

use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Taps on each side of the resampling kernel.
const SINC_HALF_WIDTH: usize = 32;

/// Default FIR length for [`low_pass`]; odd for a symmetric, linear-phase
/// filter. A Hamming window gives ~53 dB stopband attenuation.
const LOWPASS_TAPS: usize = 101;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Windowed-sinc rate conversion. Each output sample is a normalized
/// weighted sum of nearby input samples, so DC is preserved exactly.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    if target_rate == clip.sample_rate() {
        return Ok(clip.clone());
    }
    let from = clip.sample_rate() as f64;
    let to = target_rate as f64;
    let out_len = ((clip.len() as f64) * to / from).round() as usize;
    if out_len == 0 {
        return Err(Error::Dimension(format!(
            "resampling {} samples from {} Hz to {} Hz produces empty output",
            clip.len(),
            clip.sample_rate(),
            target_rate
        )));
    }
    // Anti-alias at 97.5% of the smaller Nyquist.
    let cutoff = (to / from).min(1.0) * 0.975;
    let half = SINC_HALF_WIDTH as f64;
    let x = clip.samples();
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let t = j as f64 * from / to;
        let lo = ((t - half).ceil() as isize).max(0) as usize;
        let hi = ((t + half).floor() as isize).min(x.len() as isize - 1) as usize;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (n, &xv) in x.iter().enumerate().take(hi + 1).skip(lo) {
            let u = t - n as f64;
            let w = cutoff * sinc(cutoff * u) * hann_lobe(u / half);
            acc += w * xv;
            wsum += w;
        }
        out.push(if wsum.abs() > 1e-12 { acc / wsum } else { 0.0 });
    }
    Ok(AudioClip::clamped(out, target_rate)?.0)
}

fn hann_lobe(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.5 + 0.5 * (std::f64::consts::PI * u).cos()
    }
}

/// Hamming-windowed sinc taps, normalized to unit DC gain.
pub(crate) fn lowpass_taps(normalized_cutoff: f64, n_taps: usize) -> Vec<f64> {
    debug_assert!(n_taps % 2 == 1, "need an odd tap count for linear phase");
    let mid = (n_taps / 2) as f64;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let u = i as f64 - mid;
            let w = 0.54
                - 0.46 * (std::f64::consts::TAU * i as f64 / (n_taps as f64 - 1.0)).cos();
            normalized_cutoff * sinc(normalized_cutoff * u) * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Same-length FIR filtering with zero padding at the edges and group-delay
/// compensation (symmetric kernel centered on each output sample).
pub(crate) fn fir_same(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let mid = taps.len() / 2;
    let mut out = vec![0.0; x.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &tap) in taps.iter().enumerate() {
            let idx = n as isize + k as isize - mid as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += tap * x[idx as usize];
            }
        }
        *o = acc;
    }
    out
}

/// FIR low-pass at `cutoff_hz` (must be below Nyquist).
pub fn low_pass(clip: &AudioClip, cutoff_hz: f64) -> Result<AudioClip> {
    let nyquist = clip.sample_rate() as f64 / 2.0;
    if cutoff_hz <= 0.0 || cutoff_hz >= nyquist {
        return Err(Error::Config(format!(
            "low-pass cutoff {cutoff_hz} Hz must sit in (0, Nyquist {nyquist})"
        )));
    }
    let taps = lowpass_taps(cutoff_hz / nyquist, LOWPASS_TAPS);
    let filtered = fir_same(clip.samples(), &taps);
    Ok(AudioClip::clamped(filtered, clip.sample_rate())?.0)
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

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn dc_preserved_through_resample_round_trip() {
        let clip = AudioClip::new(vec![0.25; 8000], 8000).unwrap();
        let down = resample(&clip, 6000).unwrap();
        let back = resample(&down, 8000).unwrap();
        assert!((back.len() as isize - 8000).unsigned_abs() <= 1);
        for &v in &back.samples()[100..back.len() - 100] {
            assert!((v - 0.25).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn dc_preserved_through_low_pass() {
        let clip = AudioClip::new(vec![0.3; 4000], 8000).unwrap();
        let filtered = low_pass(&clip, 1200.0).unwrap();
        for &v in &filtered.samples()[200..3800] {
            assert!((v - 0.3).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn tone_above_cutoff_attenuated_40db() {
        let clip = sine(2500.0, 8000, 8000, 0.5);
        let filtered = low_pass(&clip, 1200.0).unwrap();
        let before = rms(&clip.samples()[500..7500]);
        let after = rms(&filtered.samples()[500..7500]);
        let atten_db = 20.0 * (before / after.max(1e-30)).log10();
        assert!(atten_db >= 40.0, "only {atten_db:.1} dB");
    }

    #[test]
    fn tone_below_cutoff_passes() {
        let clip = sine(400.0, 8000, 8000, 0.5);
        let filtered = low_pass(&clip, 1200.0).unwrap();
        let before = rms(&clip.samples()[500..7500]);
        let after = rms(&filtered.samples()[500..7500]);
        assert!((after / before - 1.0).abs() < 0.01);
    }

    #[test]
    fn cutoff_at_nyquist_rejected() {
        let clip = sine(400.0, 8000, 1000, 0.5);
        assert!(low_pass(&clip, 4000.0).is_err());
    }

    #[test]
    fn resample_length_tracks_ratio() {
        let clip = sine(400.0, 8000, 3000, 0.5);
        let down = resample(&clip, 5333).unwrap();
        let want = (3000.0 * 5333.0 / 8000.0_f64).round() as usize;
        assert_eq!(down.len(), want);
        assert_eq!(down.sample_rate(), 5333);
    }

    #[test]
    fn empty_output_rejected() {
        let clip = AudioClip::new(vec![0.1; 3], 96_000).unwrap();
        assert!(resample(&clip, 1).is_err());
    }
}
