//! Metrics and robustness-matrix generation.
//!
//! Trials run sequentially in a fixed order, so aggregation is
//! order-independent and matrices are bitwise reproducible under a seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::dsp::attack::{apply_attack, AttackKind, AttackSpec};
use crate::dsp::stft::{stft, Window};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::model::{WatermarkCodec, WatermarkMessage};

/// Reported in place of +infinity when signals match (or differ only by
/// scale); keeps CSV cells finite.
pub const SI_SNR_CAP_DB: f64 = 60.0;

/// Fraction of digit positions recovered correctly.
pub fn digit_accuracy(want: &WatermarkMessage, got: &WatermarkMessage) -> Result<f64> {
    if want.len() != got.len() || want.base() != got.base() {
        return Err(Error::Metric(format!(
            "cannot compare a {}-digit base-{} message with a {}-digit base-{} one",
            want.len(),
            want.base(),
            got.len(),
            got.base()
        )));
    }
    let hits = want
        .digits()
        .iter()
        .zip(got.digits())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / want.len() as f64)
}

/// Scale-invariant SNR in dB with zero-mean normalization, capped at
/// [`SI_SNR_CAP_DB`].
pub fn si_snr(reference: &AudioClip, estimate: &AudioClip) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Metric(format!(
            "si-snr needs equal lengths, got {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let n = reference.len() as f64;
    let mean_r: f64 = reference.samples().iter().sum::<f64>() / n;
    let mean_e: f64 = estimate.samples().iter().sum::<f64>() / n;
    let r: Vec<f64> = reference.samples().iter().map(|v| v - mean_r).collect();
    let e: Vec<f64> = estimate.samples().iter().map(|v| v - mean_e).collect();
    let r_energy: f64 = r.iter().map(|v| v * v).sum();
    if r_energy <= 0.0 {
        return Err(Error::Metric("zero-power reference".into()));
    }
    let dot: f64 = r.iter().zip(&e).map(|(a, b)| a * b).sum();
    let scale = dot / r_energy;
    let target_energy = scale * scale * r_energy;
    let noise_energy: f64 = e
        .iter()
        .zip(&r)
        .map(|(ev, rv)| {
            let err = ev - scale * rv;
            err * err
        })
        .sum();
    if noise_energy <= 0.0 {
        return Ok(SI_SNR_CAP_DB);
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).min(SI_SNR_CAP_DB))
}

/// RMS difference of log-magnitude spectra over aligned frames.
pub fn log_spectral_distance(x: &AudioClip, y: &AudioClip) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Metric(format!(
            "lsd needs equal lengths, got {} vs {}",
            x.len(),
            y.len()
        )));
    }
    const FLOOR: f64 = 1e-10;
    let fft = 256.min(x.len().next_power_of_two());
    let hop = fft / 4;
    let a = stft(x, fft, hop, Window::Hann)?;
    let b = stft(y, fft, hop, Window::Hann)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (ca, cb) in a.bins.iter().zip(&b.bins) {
        let la = ca.magnitude().max(FLOOR).ln();
        let lb = cb.magnitude().max(FLOOR).ln();
        acc += (la - lb) * (la - lb);
        count += 1;
    }
    Ok((acc / count as f64).sqrt())
}

/// One row of the robustness table: digit accuracy per attack column.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessMatrix {
    pub label: String,
    pub n_codebooks: usize,
    pub bandwidth_bps: f64,
    pub capacity_bps: f64,
    /// Accuracy per attack CLI name; `identity` holds the Normal column.
    pub cells: BTreeMap<String, f64>,
    pub average: f64,
}

/// Fixed report column order (identity is printed as `normal`).
pub const ATTACK_COLUMNS: [&str; 8] = [
    "identity", "rsp", "noise", "sd", "ar", "ea", "lp", "resplice",
];

impl RobustnessMatrix {
    pub fn csv_header() -> String {
        let mut cols = vec![
            "model".to_string(),
            "n_codebooks".into(),
            "bandwidth_bps".into(),
            "capacity_bps".into(),
        ];
        for c in ATTACK_COLUMNS {
            cols.push(if c == "identity" { "normal".into() } else { c.to_string() });
        }
        cols.push("average".into());
        cols.join(",")
    }

    /// CSV row in the fixed column order; attacks that were not evaluated
    /// stay as labeled empty cells.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.label.clone(),
            self.n_codebooks.to_string(),
            format!("{:.1}", self.bandwidth_bps),
            format!("{:.2}", self.capacity_bps),
        ];
        for c in ATTACK_COLUMNS {
            cols.push(
                self.cells
                    .get(c)
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_default(),
            );
        }
        cols.push(format!("{:.6}", self.average));
        cols.join(",")
    }
}

pub fn robustness_csv(rows: &[RobustnessMatrix]) -> String {
    let mut out = vec![RobustnessMatrix::csv_header()];
    out.extend(rows.iter().map(|r| r.csv_row()));
    out.join("\n")
}

pub fn robustness_json(rows: &[RobustnessMatrix]) -> Result<String> {
    serde_json::to_string_pretty(rows).map_err(|e| Error::Format(format!("json: {e}")))
}

/// Embeds `trials` random messages into every clip, applies each attack to
/// the watermarked reconstruction, extracts, and aggregates digit accuracy.
/// Deterministic for a fixed seed.
pub fn robustness_eval(
    model: &WatermarkCodec,
    clips: &[AudioClip],
    attack_pool: &[AttackKind],
    trials: usize,
    seed: u64,
) -> Result<RobustnessMatrix> {
    if clips.is_empty() || trials == 0 {
        return Err(Error::Metric("need at least one clip and one trial".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Draw all randomness up front in a fixed order.
    let mut messages = Vec::with_capacity(clips.len() * trials);
    for _ in 0..clips.len() * trials {
        messages.push(WatermarkMessage::random(
            model.config.message_digits,
            model.config.message_base,
            &mut rng,
        )?);
    }
    let attack_seeds: Vec<u64> = (0..clips.len() * trials * attack_pool.len())
        .map(|_| rng.gen())
        .collect();

    let mut per_attack = vec![0.0f64; attack_pool.len()];
    let mut seed_cursor = 0usize;
    for (ci, clip) in clips.iter().enumerate() {
        for t in 0..trials {
            let msg = &messages[ci * trials + t];
            let (_, watermarked) = model.embed(clip, msg)?;
            for (ai, kind) in attack_pool.iter().enumerate() {
                let spec = AttackSpec::new(*kind, attack_seeds[seed_cursor]);
                seed_cursor += 1;
                let attacked = apply_attack(&watermarked, &spec)?;
                let (extracted, _) = model.extract(&attacked)?;
                per_attack[ai] += digit_accuracy(msg, &extracted)?;
            }
        }
    }
    let n = (clips.len() * trials) as f64;
    let mut cells = BTreeMap::new();
    for (ai, kind) in attack_pool.iter().enumerate() {
        cells.insert(kind.cli_name().to_string(), per_attack[ai] / n);
    }
    let average = cells.values().sum::<f64>() / cells.len() as f64;
    Ok(RobustnessMatrix {
        label: format!(
            "{}@{}",
            model.config.message_digits, model.config.message_base
        ),
        n_codebooks: model.config.n_codebooks,
        bandwidth_bps: model.config.bandwidth_bps(),
        capacity_bps: model.config.capacity_bits(),
        cells,
        average,
    })
}

/// Codec quality proxies over a clip set, plus labeled empty columns for
/// externally computed perceptual scores.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub label: String,
    pub n_codebooks: usize,
    pub bandwidth_bps: f64,
    pub capacity_bps: f64,
    pub si_snr_db: f64,
    pub log_spectral_distance: f64,
}

impl QualityReport {
    pub fn csv_header() -> String {
        "model,n_codebooks,bandwidth_bps,capacity_bps,si_snr_db,lsd,pesq,stoi,visqol,mos".into()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.1},{:.2},{:.3},{:.4},,,,",
            self.label,
            self.n_codebooks,
            self.bandwidth_bps,
            self.capacity_bps,
            self.si_snr_db,
            self.log_spectral_distance
        )
    }
}

/// Round-trips every clip through embed/decode with a fixed message and
/// averages the quality proxies.
pub fn quality_eval(
    model: &WatermarkCodec,
    clips: &[AudioClip],
    seed: u64,
) -> Result<QualityReport> {
    if clips.is_empty() {
        return Err(Error::Metric("need at least one clip".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut snr_acc = 0.0;
    let mut lsd_acc = 0.0;
    for clip in clips {
        let msg = WatermarkMessage::random(
            model.config.message_digits,
            model.config.message_base,
            &mut rng,
        )?;
        let (_, watermarked) = model.embed(clip, &msg)?;
        snr_acc += si_snr(clip, &watermarked)?;
        lsd_acc += log_spectral_distance(clip, &watermarked)?;
    }
    let n = clips.len() as f64;
    Ok(QualityReport {
        label: format!(
            "{}@{}",
            model.config.message_digits, model.config.message_base
        ),
        n_codebooks: model.config.n_codebooks,
        bandwidth_bps: model.config.bandwidth_bps(),
        capacity_bps: model.config.capacity_bits(),
        si_snr_db: snr_acc / n,
        log_spectral_distance: lsd_acc / n,
    })
}
