//! Loss terms for joint codec + watermark optimization.

use crate::dsp::mel::{mel_spectrogram, MelParams};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::model::WatermarkMessage;
use crate::tensor::Var;

/// Probabilities below this are clamped before the log and flagged.
pub const CE_PROB_FLOOR: f64 = 1e-12;

/// Graph-level watermark cross-entropy: mean over digits and batch of
/// `-log p(true digit)`. `probs` holds one `[B, base]` softmax row per digit
/// position. Returns the scalar loss node and how many probabilities had to
/// be clamped.
pub fn watermark_ce(probs: &[Var], messages: &[&WatermarkMessage]) -> Result<(Var, usize)> {
    if probs.is_empty() {
        return Err(Error::Dimension("no digit probabilities".into()));
    }
    let mut clamp_events = 0usize;
    let mut picked = Vec::with_capacity(probs.len());
    for (j, p) in probs.iter().enumerate() {
        let cols: Vec<usize> = messages.iter().map(|m| m.digits()[j] as usize).collect();
        let row = p.pick_per_row(&cols)?;
        clamp_events += row
            .value()
            .data()
            .iter()
            .filter(|&&v| v < CE_PROB_FLOOR)
            .count();
        picked.push(row.clamp_min(CE_PROB_FLOOR).log().neg());
    }
    let stacked = Var::concat_last(&picked)?;
    Ok((stacked.mean(), clamp_events))
}

/// Value-level watermark cross-entropy over one message: mean over digits of
/// `-ln p(true digit)`. `pred` holds one probability row per digit.
pub fn watermark_ce_loss(pred: &[Vec<f64>], msg: &WatermarkMessage) -> Result<(f64, bool)> {
    if pred.len() != msg.len() {
        return Err(Error::Metric(format!(
            "{} probability rows for a {}-digit message",
            pred.len(),
            msg.len()
        )));
    }
    let mut total = 0.0;
    let mut clamped = false;
    for (row, &digit) in pred.iter().zip(msg.digits()) {
        let p = row.get(digit as usize).copied().ok_or_else(|| {
            Error::Metric(format!("row of {} entries, digit {digit}", row.len()))
        })?;
        if p < CE_PROB_FLOOR {
            clamped = true;
        }
        total += -p.max(CE_PROB_FLOOR).ln();
    }
    Ok((total / msg.len() as f64, clamped))
}

/// L1 distance between the log-mel spectrograms of two equal-length clips.
pub fn mel_recon_loss(x: &AudioClip, x_w: &AudioClip, params: &MelParams) -> Result<f64> {
    if x.len() != x_w.len() {
        return Err(Error::Dimension(format!(
            "mel loss needs equal lengths, got {} vs {}",
            x.len(),
            x_w.len()
        )));
    }
    let a = mel_spectrogram(x, params)?;
    let b = mel_spectrogram(x_w, params)?;
    let n = a.values.len() as f64;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        / n)
}

/// LSGAN generator objective: `mean((D(fake) - 1)^2)`.
pub fn lsgan_generator(fake_scores: &Var) -> Var {
    fake_scores.add_scalar(-1.0).square().mean()
}

/// LSGAN discriminator objective:
/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`.
pub fn lsgan_discriminator(real_scores: &Var, fake_scores: &Var) -> Result<Var> {
    real_scores
        .add_scalar(-1.0)
        .square()
        .mean()
        .add(&fake_scores.square().mean())
}

/// L1 feature-matching over paired intermediate activations.
pub fn feature_match(real_feats: &[Var], fake_feats: &[Var]) -> Result<Var> {
    if real_feats.is_empty() || real_feats.len() != fake_feats.len() {
        return Err(Error::Dimension(format!(
            "feature matching needs equal non-empty stacks, got {} vs {}",
            real_feats.len(),
            fake_feats.len()
        )));
    }
    let mut acc: Option<Var> = None;
    for (r, f) in real_feats.iter().zip(fake_feats) {
        let term = f.sub(r)?.abs().mean();
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    Ok(acc.unwrap().mul_scalar(1.0 / real_feats.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(text: &str, base: u8) -> WatermarkMessage {
        WatermarkMessage::parse(text, text.len(), base).unwrap()
    }

    #[test]
    fn one_hot_correct_gives_zero() {
        let m = msg("2", 10);
        let mut row = vec![0.0; 10];
        row[2] = 1.0;
        let (loss, clamped) = watermark_ce_loss(&[row], &m).unwrap();
        assert_eq!(loss, 0.0);
        assert!(!clamped);
    }

    #[test]
    fn uniform_base16_is_ln16() {
        let m = msg("A30F", 16);
        let rows = vec![vec![1.0 / 16.0; 16]; 4];
        let (loss, _) = watermark_ce_loss(&rows, &m).unwrap();
        assert!((loss - 16f64.ln()).abs() < 1e-12, "{loss}");
        assert!((loss - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn uniform_base10_is_ln10() {
        let m = msg("1234", 10);
        let rows = vec![vec![0.1; 10]; 4];
        let (loss, _) = watermark_ce_loss(&rows, &m).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.3026).abs() < 1e-4);
    }

    #[test]
    fn zero_probability_clamps_and_flags() {
        let m = msg("7", 10);
        let mut row = vec![0.1; 10];
        row[7] = 0.0;
        let (loss, clamped) = watermark_ce_loss(&[row], &m).unwrap();
        assert!(clamped);
        assert!(loss.is_finite());
    }

    #[test]
    fn mel_loss_zero_on_identical_positive_otherwise() {
        let params = MelParams::for_rate(8000);
        let samples: Vec<f64> = (0..4000)
            .map(|n| 0.4 * (std::f64::consts::TAU * 500.0 * n as f64 / 8000.0).sin())
            .collect();
        let x = AudioClip::new(samples, 8000).unwrap();
        assert_eq!(mel_recon_loss(&x, &x, &params).unwrap(), 0.0);
        let silence = AudioClip::new(vec![0.0; 4000], 8000).unwrap();
        assert!(mel_recon_loss(&x, &silence, &params).unwrap() > 0.0);
    }

    #[test]
    fn mel_loss_rejects_length_mismatch() {
        let params = MelParams::for_rate(8000);
        let a = AudioClip::new(vec![0.1; 4000], 8000).unwrap();
        let b = AudioClip::new(vec![0.1; 4001], 8000).unwrap();
        assert!(mel_recon_loss(&a, &b, &params).is_err());
    }

    #[test]
    fn lsgan_value_at_constant_half() {
        use crate::tensor::{Session, Tensor};
        let s = Session::frozen();
        let half = s.input(Tensor::full(&[4], 0.5));
        let g = lsgan_generator(&half).value().item().unwrap();
        assert_eq!(g, 0.25);
        let d = lsgan_discriminator(&half, &half)
            .unwrap()
            .value()
            .item()
            .unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn feature_match_zero_for_identical() {
        use crate::tensor::{Session, Tensor};
        let s = Session::frozen();
        let a = s.input(Tensor::from_slice(&[1.0, 2.0]));
        let b = s.input(Tensor::from_slice(&[1.0, 2.0]));
        let fm = feature_match(&[a.clone()], &[b]).unwrap();
        assert_eq!(fm.value().item().unwrap(), 0.0);
        let c = s.input(Tensor::from_slice(&[2.0, 3.0]));
        let fm = feature_match(&[a], &[c]).unwrap();
        assert_eq!(fm.value().item().unwrap(), 1.0);
    }
}
