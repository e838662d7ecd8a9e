//! The disturbance layer: attack transforms applied to watermarked speech,
//! both as a training-time simulator and as an evaluation harness.
//!
//! Every stochastic attack is a pure function of (input, params, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::resample::{low_pass, resample};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::gaussian;

/// Attack transform and its parameters. `None` parameters take the
/// rate-dependent defaults documented on each variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AttackKind {
    /// Pass-through.
    #[serde(rename = "identity")]
    Identity,
    /// Resample to `target_rate` and back; default 2/3 of the native rate.
    #[serde(rename = "rsp")]
    Resample {
        #[serde(default)]
        target_rate: Option<u32>,
    },
    /// Additive white Gaussian noise at a target SNR (default 20 dB).
    #[serde(rename = "noise")]
    Noise {
        #[serde(default = "default_snr_db")]
        snr_db: f64,
    },
    /// A fraction `p` of samples zeroed at seeded positions (default 0.001).
    #[serde(rename = "sd")]
    SampleDropout {
        #[serde(default = "default_dropout_p")]
        p: f64,
    },
    /// Scale by `factor` (default 0.9).
    #[serde(rename = "ar")]
    AmplitudeReduction {
        #[serde(default = "default_ar_factor")]
        factor: f64,
    },
    /// `y[n] = x[n] + decay * x[n - delay]`, renormalized to peak <= 1
    /// (defaults: 100 ms delay, decay 0.3).
    #[serde(rename = "ea")]
    EchoAddition {
        #[serde(default = "default_echo_delay_ms")]
        delay_ms: f64,
        #[serde(default = "default_echo_decay")]
        decay: f64,
    },
    /// FIR low-pass; default cutoff 0.3 x Nyquist.
    #[serde(rename = "lp")]
    LowPassFilter {
        #[serde(default)]
        cutoff_hz: Option<f64>,
    },
    /// Removes a contiguous random third of the utterance and reconnects
    /// the remainder.
    #[serde(rename = "resplice")]
    Resplicing,
}

fn default_snr_db() -> f64 {
    20.0
}
fn default_dropout_p() -> f64 {
    0.001
}
fn default_ar_factor() -> f64 {
    0.9
}
fn default_echo_delay_ms() -> f64 {
    100.0
}
fn default_echo_decay() -> f64 {
    0.3
}

impl AttackKind {
    /// The short name used on the CLI and in report columns.
    pub fn cli_name(&self) -> &'static str {
        match self {
            AttackKind::Identity => "identity",
            AttackKind::Resample { .. } => "rsp",
            AttackKind::Noise { .. } => "noise",
            AttackKind::SampleDropout { .. } => "sd",
            AttackKind::AmplitudeReduction { .. } => "ar",
            AttackKind::EchoAddition { .. } => "ea",
            AttackKind::LowPassFilter { .. } => "lp",
            AttackKind::Resplicing => "resplice",
        }
    }

    /// Every attack with its default parameters, in report column order.
    pub fn all_defaults() -> Vec<AttackKind> {
        vec![
            AttackKind::Identity,
            AttackKind::Resample { target_rate: None },
            AttackKind::Noise {
                snr_db: default_snr_db(),
            },
            AttackKind::SampleDropout {
                p: default_dropout_p(),
            },
            AttackKind::AmplitudeReduction {
                factor: default_ar_factor(),
            },
            AttackKind::EchoAddition {
                delay_ms: default_echo_delay_ms(),
                decay: default_echo_decay(),
            },
            AttackKind::LowPassFilter { cutoff_hz: None },
            AttackKind::Resplicing,
        ]
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::all_defaults()
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown attack `{s}` (expected one of: identity, rsp, noise, sd, ar, ea, lp, resplice)"
                ))
            })
    }
}

/// An attack plus the seed that fixes its random choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, seed: u64) -> Self {
        AttackSpec { kind, seed }
    }
}

/// Applies one attack. Output length equals input length except for
/// `Resample` (within one sample) and `Resplicing` (`L - floor(L/3)`).
pub fn apply_attack(clip: &AudioClip, spec: &AttackSpec) -> Result<AudioClip> {
    let rate = clip.sample_rate();
    let len = clip.len();
    match spec.kind {
        AttackKind::Identity => Ok(clip.clone()),
        AttackKind::Resample { target_rate } => {
            let target = resample_target(rate, target_rate)?;
            let up = resample(&resample(clip, target)?, rate)?;
            debug_assert!((up.len() as isize - len as isize).unsigned_abs() <= 1);
            Ok(up)
        }
        AttackKind::Noise { snr_db } => {
            let sigma = noise_sigma(clip.power(), snr_db)?;
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            let noisy: Vec<f64> = clip
                .samples()
                .iter()
                .map(|&v| v + sigma * gaussian(&mut rng))
                .collect();
            Ok(AudioClip::clamped(noisy, rate)?.0)
        }
        AttackKind::SampleDropout { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("dropout fraction {p} not in [0, 1]")));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            let mut samples = clip.samples().to_vec();
            for i in dropout_positions(len, p, &mut rng) {
                samples[i] = 0.0;
            }
            AudioClip::new(samples, rate)
        }
        AttackKind::AmplitudeReduction { factor } => {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::Config(format!(
                    "amplitude factor {factor} not in (0, 1]"
                )));
            }
            AudioClip::new(clip.samples().iter().map(|v| v * factor).collect(), rate)
        }
        AttackKind::EchoAddition { delay_ms, decay } => {
            let delay = echo_delay_samples(rate, delay_ms);
            if delay == 0 || delay >= len {
                return Err(Error::Config(format!(
                    "echo delay of {delay} samples not inside clip of {len}"
                )));
            }
            let x = clip.samples();
            let mut y: Vec<f64> = x.to_vec();
            for n in delay..len {
                y[n] += decay * x[n - delay];
            }
            let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 1.0 {
                for v in &mut y {
                    *v /= peak;
                }
            }
            AudioClip::new(y, rate)
        }
        AttackKind::LowPassFilter { cutoff_hz } => {
            let cutoff = lowpass_cutoff(rate, cutoff_hz);
            low_pass(clip, cutoff)
        }
        AttackKind::Resplicing => {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            let keep = resplice_keep_indices(len, &mut rng)?;
            let x = clip.samples();
            AudioClip::new(keep.iter().map(|&i| x[i]).collect(), rate)
        }
    }
}

/// Default resample target: 2/3 of the native rate.
pub(crate) fn resample_target(rate: u32, target: Option<u32>) -> Result<u32> {
    let t = target.unwrap_or(rate * 2 / 3);
    if t == 0 {
        return Err(Error::Config("resample target rate must be positive".into()));
    }
    Ok(t)
}

/// Default low-pass cutoff: 0.3 x Nyquist.
pub(crate) fn lowpass_cutoff(rate: u32, cutoff: Option<f64>) -> f64 {
    cutoff.unwrap_or(0.3 * rate as f64 / 2.0)
}

/// Noise standard deviation hitting `snr_db` against a signal of `power`.
pub(crate) fn noise_sigma(power: f64, snr_db: f64) -> Result<f64> {
    if power <= 0.0 {
        return Err(Error::Metric(
            "cannot target an SNR against a zero-power signal".into(),
        ));
    }
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Distinct seeded positions for sample dropout: `round(p * len)` of them.
pub(crate) fn dropout_positions(len: usize, p: f64, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let n = ((p * len as f64).round() as usize).min(len);
    rand::seq::index::sample(rng, len, n).into_vec()
}

/// Indices kept by resplicing: a contiguous third is removed at a seeded
/// offset, the two remaining runs are reconnected in original order.
pub(crate) fn resplice_keep_indices(len: usize, rng: &mut ChaCha20Rng) -> Result<Vec<usize>> {
    let cut = len / 3;
    if cut == 0 {
        return Err(Error::Dimension(format!(
            "clip of {len} samples too short to resplice"
        )));
    }
    let start = rng.gen_range(0..=len - cut);
    let mut keep = Vec::with_capacity(len - cut);
    keep.extend(0..start);
    keep.extend(start + cut..len);
    Ok(keep)
}

/// Echo delay in samples for a delay given in milliseconds.
pub(crate) fn echo_delay_samples(rate: u32, delay_ms: f64) -> usize {
    (delay_ms / 1000.0 * rate as f64).round() as usize
}
