//! Browser bindings for the watermarking codec.
//!
//! Ships a small pre-trained model plus its training corpus (re-synthesized
//! deterministically in the browser) and exposes three operations to the
//! page: inspect a clip, run the attack lab, and run a full
//! embed / compress / decode / attack / extract round trip.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sigil_core::dsp::attack::{apply_attack, AttackKind, AttackSpec};
use sigil_core::dsp::mel::mel_spectrogram;
use sigil_core::dsp::AudioClip;
use sigil_core::error::Error;
use sigil_core::eval::{digit_accuracy, si_snr};
use sigil_core::model::{WatermarkCodec, WatermarkMessage};
use sigil_core::synth::{synth_corpus, SynthSpec};
use sigil_core::tensor::checkpoint::Checkpoint;

/// Overfit desk-scale checkpoint baked into the binary.
const MODEL_BYTES: &[u8] = include_bytes!("../assets/demo.ckpt");

/// Matches the corpus the bundled model was trained on.
const CORPUS: SynthSpec = SynthSpec {
    n_clips: 8,
    duration_secs: 1.0,
    sample_rate: 8000,
    seed: 17,
};

fn err_js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_attack(kind: &str, param: f64, use_param: bool) -> Result<AttackKind, JsValue> {
    let base: AttackKind = kind.parse().map_err(err_js)?;
    if !use_param {
        return Ok(base);
    }
    Ok(match base {
        AttackKind::Noise { .. } => AttackKind::Noise { snr_db: param },
        AttackKind::SampleDropout { .. } => AttackKind::SampleDropout { p: param },
        AttackKind::AmplitudeReduction { .. } => AttackKind::AmplitudeReduction { factor: param },
        AttackKind::EchoAddition { decay, .. } => AttackKind::EchoAddition {
            delay_ms: param,
            decay,
        },
        AttackKind::LowPassFilter { .. } => AttackKind::LowPassFilter {
            cutoff_hz: Some(param),
        },
        AttackKind::Resample { .. } => AttackKind::Resample {
            target_rate: Some(param as u32),
        },
        other => other,
    })
}

#[derive(Serialize)]
struct AttackOutcome {
    len: usize,
    snr_db: Option<f64>,
    clipped_peak: f64,
}

#[derive(Serialize)]
struct RoundtripOutcome {
    message: String,
    extracted: String,
    digit_accuracy: f64,
    si_snr_db: f64,
    bandwidth_bps: f64,
    bits_per_frame: u32,
    stream_bytes: usize,
    n_frames: u32,
    confidences: Vec<f64>,
    prob_rows: Vec<Vec<f64>>,
}

#[wasm_bindgen]
pub struct Demo {
    model: WatermarkCodec,
    clips: Vec<AudioClip>,
    scratch: Option<AudioClip>,
}

#[wasm_bindgen]
impl Demo {
    /// Loads the bundled model and re-synthesizes its training corpus.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsValue> {
        let ck = Checkpoint::from_bytes(MODEL_BYTES).map_err(err_js)?;
        let model = WatermarkCodec::from_checkpoint(&ck).map_err(err_js)?;
        let clips = synth_corpus(&CORPUS)
            .map_err(err_js)?
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        Ok(Demo {
            model,
            clips,
            scratch: None,
        })
    }

    pub fn clip_count(&self) -> usize {
        self.clips.len()
    }

    pub fn sample_rate(&self) -> u32 {
        CORPUS.sample_rate
    }

    pub fn message_digits(&self) -> usize {
        self.model.config.message_digits
    }

    pub fn message_base(&self) -> u8 {
        self.model.config.message_base
    }

    pub fn model_summary(&self) -> String {
        format!(
            "{} params | {} codebooks x {} entries | {} bps | capacity {:.1} bits",
            self.model.param_count(),
            self.model.config.n_codebooks,
            self.model.config.codebook_size,
            self.model.config.bandwidth_bps(),
            self.model.config.capacity_bits()
        )
    }

    /// Raw samples of a corpus clip (for drawing and playback).
    pub fn clip_samples(&self, index: usize) -> Result<Vec<f32>, JsValue> {
        let clip = self.clip(index)?;
        Ok(clip.samples().iter().map(|&v| v as f32).collect())
    }

    /// Log-mel values of a corpus clip, row-major `[frame][mel]`.
    pub fn clip_mel(&self, index: usize) -> Result<Vec<f32>, JsValue> {
        let clip = self.clip(index)?.clone();
        self.mel_of(&clip)
    }

    /// `[n_frames, n_mels, log_floor_ln]` for scaling heatmaps.
    pub fn mel_dims(&self, clip_len: usize) -> Vec<f32> {
        let p = self.model.config.mel;
        let frames = sigil_core::dsp::mel::mel_frames(clip_len, &p);
        vec![frames as f32, p.n_mels as f32, p.log_floor.ln() as f32]
    }

    /// Applies an attack to a corpus clip; keeps the result for
    /// `scratch_samples` / `scratch_mel`. Returns a JSON summary.
    pub fn attack_lab(
        &mut self,
        index: usize,
        kind: &str,
        param: f64,
        use_param: bool,
        seed: u64,
    ) -> Result<String, JsValue> {
        let clip = self.clip(index)?.clone();
        let attack = parse_attack(kind, param, use_param)?;
        let attacked = apply_attack(&clip, &AttackSpec::new(attack, seed)).map_err(err_js)?;
        let snr_db = if attacked.len() == clip.len() && clip.power() > 0.0 {
            let p_noise = clip
                .samples()
                .iter()
                .zip(attacked.samples())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / clip.len() as f64;
            (p_noise > 0.0).then(|| 10.0 * (clip.power() / p_noise).log10())
        } else {
            None
        };
        let outcome = AttackOutcome {
            len: attacked.len(),
            snr_db,
            clipped_peak: attacked.peak(),
        };
        self.scratch = Some(attacked);
        serde_json::to_string(&outcome).map_err(|e| JsValue::from_str(&e.to_string()))
    }

    /// Full pipeline: embed `message` into clip `index`, pack/unpack the
    /// token stream, decode, attack, extract. JSON summary; the watermarked
    /// (post-attack) audio lands in the scratch buffer.
    pub fn roundtrip(
        &mut self,
        index: usize,
        message: &str,
        kind: &str,
        param: f64,
        use_param: bool,
        seed: u64,
    ) -> Result<String, JsValue> {
        let clip = self.clip(index)?.clone();
        let msg = WatermarkMessage::parse(
            message,
            self.model.config.message_digits,
            self.model.config.message_base,
        )
        .map_err(err_js)?;
        let attack = parse_attack(kind, param, use_param)?;
        let (stream, _) = self.model.embed(&clip, &msg).map_err(err_js)?;
        let packed = stream.pack().map_err(err_js)?;
        let stream = sigil_core::quantizer::CodeStream::unpack(&packed).map_err(err_js)?;
        let decoded = self.model.decode_stream(&stream).map_err(err_js)?;
        let trimmed = decoded
            .truncated(clip.len().min(decoded.len()))
            .map_err(err_js)?;
        let snr = si_snr(&clip, &trimmed).map_err(err_js)?;
        let attacked = apply_attack(&trimmed, &AttackSpec::new(attack, seed)).map_err(err_js)?;
        let (extracted, prob_rows) = self.model.extract(&attacked).map_err(err_js)?;
        let acc = digit_accuracy(&msg, &extracted).map_err(err_js)?;
        let outcome = RoundtripOutcome {
            message: msg.to_text(),
            extracted: extracted.to_text(),
            digit_accuracy: acc,
            si_snr_db: snr,
            bandwidth_bps: stream.bandwidth_bps(),
            bits_per_frame: stream.bits_per_frame(),
            stream_bytes: packed.len(),
            n_frames: stream.n_frames,
            confidences: prob_rows
                .iter()
                .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
            prob_rows,
        };
        self.scratch = Some(attacked);
        serde_json::to_string(&outcome).map_err(|e| JsValue::from_str(&e.to_string()))
    }

    /// Samples of the most recent attack/roundtrip output.
    pub fn scratch_samples(&self) -> Result<Vec<f32>, JsValue> {
        let clip = self.scratch()?;
        Ok(clip.samples().iter().map(|&v| v as f32).collect())
    }

    /// Log-mel of the most recent attack/roundtrip output.
    pub fn scratch_mel(&self) -> Result<Vec<f32>, JsValue> {
        let clip = self.scratch()?.clone();
        self.mel_of(&clip)
    }

    fn clip(&self, index: usize) -> Result<&AudioClip, JsValue> {
        self.clips
            .get(index)
            .ok_or_else(|| JsValue::from_str(&format!("clip index {index} out of range")))
    }

    fn scratch(&self) -> Result<&AudioClip, JsValue> {
        self.scratch
            .as_ref()
            .ok_or_else(|| JsValue::from_str("run an attack or round trip first"))
    }

    fn mel_of(&self, clip: &AudioClip) -> Result<Vec<f32>, JsValue> {
        let mel = mel_spectrogram(clip, &self.model.config.mel).map_err(err_js)?;
        Ok(mel.values.iter().map(|&v| v as f32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_checkpoint_loads_and_runs() {
        let mut demo = Demo::new().expect("bundled checkpoint must load");
        assert_eq!(demo.clip_count(), 8);
        let json = demo
            .roundtrip(0, "A30F", "identity", 0.0, false, 7)
            .unwrap();
        assert!(json.contains("\"extracted\""), "{json}");
        let mel = demo.scratch_mel().unwrap();
        assert!(!mel.is_empty());
    }

    #[test]
    fn attack_lab_reports_snr() {
        let mut demo = Demo::new().unwrap();
        let json = demo.attack_lab(1, "noise", 20.0, true, 3).unwrap();
        assert!(json.contains("snr_db"), "{json}");
    }
}
