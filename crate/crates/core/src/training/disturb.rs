//! Graph-side disturbance layer.
//!
//! Applies one attack to a single-item waveform node so gradients keep
//! flowing to the codec. Most attacks are linear or masking operations with
//! exact derivatives; resampling is the exception and uses a
//! straight-through surrogate (forward = true attack, backward = identity).
//! Evaluation always uses the true value-level attacks from
//! [`crate::dsp::attack`].

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dsp::attack::{
    apply_attack, dropout_positions, echo_delay_samples, lowpass_cutoff, noise_sigma,
    resample_target, resplice_keep_indices, AttackKind, AttackSpec,
};
use crate::dsp::resample::lowpass_taps;
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::{gaussian, Session, Tensor, Var};

/// Taps of the in-graph low-pass attack (same design as the DSP path).
const LP_TAPS: usize = 101;

/// Applies `kind` to a `[1, L]` waveform node at `rate` Hz. The output keeps
/// shape `[1, L]` except for resplicing, which shortens it.
pub fn apply_attack_graph(
    s: &Session,
    x: &Var,
    kind: AttackKind,
    seed: u64,
    rate: u32,
) -> Result<Var> {
    let shape = x.shape();
    if shape.len() != 2 || shape[0] != 1 {
        return Err(Error::Dimension(format!(
            "graph attacks operate on [1, L] items, got {shape:?}"
        )));
    }
    let len = shape[1];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match kind {
        AttackKind::Identity => Ok(x.clone()),
        AttackKind::AmplitudeReduction { factor } => {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::Config(format!(
                    "amplitude factor {factor} not in (0, 1]"
                )));
            }
            Ok(x.mul_scalar(factor))
        }
        AttackKind::Noise { snr_db } => {
            let power = x.with_value(|t| t.data().iter().map(|v| v * v).sum::<f64>())
                / len as f64;
            let sigma = noise_sigma(power, snr_db)?;
            let noise: Vec<f64> = (0..len).map(|_| sigma * gaussian(&mut rng)).collect();
            x.add(&s.constant(Tensor::new(vec![1, len], noise)?))
        }
        AttackKind::SampleDropout { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("dropout fraction {p} not in [0, 1]")));
            }
            let mut mask = vec![1.0; len];
            for i in dropout_positions(len, p, &mut rng) {
                mask[i] = 0.0;
            }
            x.mul(&s.constant(Tensor::new(vec![1, len], mask)?))
        }
        AttackKind::EchoAddition { delay_ms, decay } => {
            let delay = echo_delay_samples(rate, delay_ms);
            if delay == 0 || delay >= len {
                return Err(Error::Config(format!(
                    "echo delay of {delay} samples not inside clip of {len}"
                )));
            }
            let echoed = x.delay_add(delay, decay)?;
            let peak = echoed.with_value(|t| t.max_abs());
            if peak > 1.0 {
                Ok(echoed.mul_scalar(1.0 / peak))
            } else {
                Ok(echoed)
            }
        }
        AttackKind::LowPassFilter { cutoff_hz } => {
            let cutoff = lowpass_cutoff(rate, cutoff_hz);
            let nyquist = rate as f64 / 2.0;
            if cutoff <= 0.0 || cutoff >= nyquist {
                return Err(Error::Config(format!(
                    "low-pass cutoff {cutoff} Hz must sit in (0, Nyquist {nyquist})"
                )));
            }
            let taps = lowpass_taps(cutoff / nyquist, LP_TAPS);
            let kernel = s.constant(Tensor::new(vec![1, 1, LP_TAPS], taps)?);
            x.reshape(&[1, 1, len])?
                .conv1d(&kernel, 1, LP_TAPS / 2)?
                .reshape(&[1, len])
        }
        AttackKind::Resplicing => {
            let keep = resplice_keep_indices(len, &mut rng)?;
            x.gather_time(&keep)
        }
        AttackKind::Resample { .. } => {
            // Straight-through: true attack on values, identity backward.
            resample_target(rate, match kind {
                AttackKind::Resample { target_rate } => target_rate,
                _ => unreachable!(),
            })?;
            let clip = AudioClip::new(x.value().into_data(), rate)?;
            let attacked = apply_attack(&clip, &AttackSpec::new(kind, seed))?;
            let mut fixed = attacked.samples().to_vec();
            fixed.resize(len, 0.0);
            let delta: Vec<f64> = fixed
                .iter()
                .zip(clip.samples())
                .map(|(a, b)| a - b)
                .collect();
            x.add(&s.constant(Tensor::new(vec![1, len], delta)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(s: &Session, len: usize, seed: u64) -> Var {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.7..0.7)).collect();
        s.graph()
            .leaf(Tensor::new(vec![1, len], data).unwrap(), true)
    }

    /// Value-level attack and graph attack must agree wherever the graph
    /// path is exact (everything except noise clamping and resampling).
    #[test]
    fn graph_forward_matches_value_attack() {
        for kind in [
            AttackKind::Identity,
            AttackKind::AmplitudeReduction { factor: 0.9 },
            AttackKind::SampleDropout { p: 0.01 },
            AttackKind::Resplicing,
            AttackKind::EchoAddition {
                delay_ms: 50.0,
                decay: 0.3,
            },
        ] {
            let s = Session::frozen();
            let x = item(&s, 2000, 1);
            let y = apply_attack_graph(&s, &x, kind, 42, 8000).unwrap();
            let clip = AudioClip::new(x.value().into_data(), 8000).unwrap();
            let want = apply_attack(&clip, &AttackSpec::new(kind, 42)).unwrap();
            let got = y.value().into_data();
            assert_eq!(got.len(), want.len(), "{}", kind.cli_name());
            let worst = got
                .iter()
                .zip(want.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-12, "{}: {worst}", kind.cli_name());
        }
    }

    #[test]
    fn low_pass_graph_matches_dsp_low_pass() {
        let s = Session::frozen();
        let x = item(&s, 2000, 2);
        let y = apply_attack_graph(
            &s,
            &x,
            AttackKind::LowPassFilter { cutoff_hz: None },
            0,
            8000,
        )
        .unwrap();
        let clip = AudioClip::new(x.value().into_data(), 8000).unwrap();
        let want = apply_attack(
            &clip,
            &AttackSpec::new(AttackKind::LowPassFilter { cutoff_hz: None }, 0),
        )
        .unwrap();
        let worst = y
            .value()
            .data()
            .iter()
            .zip(want.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // DSP path clamps into [-1,1]; inputs here stay far from the rails.
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn gradients_flow_through_every_attack() {
        for kind in AttackKind::all_defaults() {
            let s = Session::new();
            let x = item(&s, 1600, 3);
            let y = apply_attack_graph(&s, &x, kind, 7, 8000).unwrap();
            y.sum().backward().unwrap();
            let g = x.grad().expect("gradient must reach the waveform");
            let nonzero = g.data().iter().filter(|&&v| v != 0.0).count();
            assert!(
                nonzero > g.numel() / 2,
                "{}: only {nonzero} nonzero gradient entries",
                kind.cli_name()
            );
        }
    }

    #[test]
    fn resample_straight_through_backward_is_identity() {
        let s = Session::new();
        let x = item(&s, 1600, 4);
        let y =
            apply_attack_graph(&s, &x, AttackKind::Resample { target_rate: None }, 9, 8000)
                .unwrap();
        y.sum().backward().unwrap();
        assert!(x.grad().unwrap().data().iter().all(|&g| g == 1.0));
    }
}
