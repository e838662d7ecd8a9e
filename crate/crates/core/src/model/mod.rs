//! The watermarking codec: speech encoder, watermark encoder with temporal
//! broadcast, iterative cross-attention imprint units, residual vector
//! quantization, speech decoder, and the mel-domain watermark extractor.

pub mod config;
mod decoder;
mod encoder;
mod extractor;
mod imprint;
pub(crate) mod layers;
mod melgraph;
pub mod message;
mod wm;

pub use config::{LossWeights, ModelConfig};
pub use message::WatermarkMessage;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::path::Path;

use crate::dsp::mel::{mel_spectrogram, MelSpec};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::quantizer::{CodeStream, Quantized, ResidualQuantizer};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{Param, Session, Tensor, Var};

use decoder::SpeechDecoder;
use encoder::SpeechEncoder;
use extractor::WatermarkExtractor;
use imprint::ImprintUnit;
use melgraph::MelGraph;
use wm::WatermarkEncoder;

/// End-to-end trainable codec with an integrated numerical watermark.
pub struct WatermarkCodec {
    pub config: ModelConfig,
    encoder: SpeechEncoder,
    wm_encoder: WatermarkEncoder,
    imprints: Vec<ImprintUnit>,
    decoder: SpeechDecoder,
    extractor: WatermarkExtractor,
    pub quantizer: ResidualQuantizer,
    mel_graph: MelGraph,
}

impl WatermarkCodec {
    /// Builds a freshly initialized model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let encoder = SpeechEncoder::new(&config, &mut rng);
        let wm_encoder = WatermarkEncoder::new(&config, &mut rng);
        let n_units = if config.share_imprint_weights {
            1
        } else {
            config.imprint_iters
        };
        let imprints = (0..n_units)
            .map(|i| ImprintUnit::new(&format!("imprint{i}"), &config, &mut rng))
            .collect();
        let decoder = SpeechDecoder::new(&config, &mut rng);
        let extractor = WatermarkExtractor::new(&config, &mut rng);
        let quantizer = ResidualQuantizer::new(
            config.n_codebooks,
            config.codebook_size,
            config.speech_dim,
            config.ema_decay,
            &mut rng,
        )?;
        let mel_graph = MelGraph::new(config.mel, config.sample_rate)?;
        Ok(WatermarkCodec {
            config,
            encoder,
            wm_encoder,
            imprints,
            decoder,
            extractor,
            quantizer,
            mel_graph,
        })
    }

    /// Every trainable parameter in a stable order.
    pub fn parameters(&self) -> Vec<Param> {
        let mut p = self.encoder.params();
        p.extend(self.wm_encoder.params());
        for u in &self.imprints {
            p.extend(u.params());
        }
        p.extend(self.decoder.params());
        p.extend(self.extractor.params());
        p
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    // ── graph-level pipeline ────────────────────────────────────────────────

    /// Batch of equal-length clips -> zero-padded waveform tensor `[B, L']`
    /// with `L'` a whole number of feature frames.
    pub fn waveform_batch(&self, clips: &[&AudioClip]) -> Result<Tensor> {
        let first = clips
            .first()
            .ok_or_else(|| Error::Dimension("empty clip batch".into()))?;
        let len = first.len();
        let hop = self.config.hop_total();
        let padded = len.div_ceil(hop) * hop;
        let mut data = vec![0.0; clips.len() * padded];
        for (i, c) in clips.iter().enumerate() {
            if c.len() != len {
                return Err(Error::Dimension(format!(
                    "clip {i} has {} samples, batch expects {len}",
                    c.len()
                )));
            }
            if c.sample_rate() != self.config.sample_rate {
                return Err(Error::Config(format!(
                    "clip {i} at {} Hz, model expects {}",
                    c.sample_rate(),
                    self.config.sample_rate
                )));
            }
            data[i * padded..i * padded + len].copy_from_slice(c.samples());
        }
        Tensor::new(vec![clips.len(), padded], data)
    }

    /// Carrier features `[B, T, speech_dim]` from a waveform `[B, L]`.
    pub fn encode_speech(&self, s: &Session, wav: &Var) -> Result<Var> {
        self.encoder.forward(s, wav)
    }

    /// Watermark features `[B, time, watermark_dim]`: per-digit embeddings,
    /// two linear layers, then temporal broadcast.
    pub fn encode_watermark(
        &self,
        s: &Session,
        messages: &[WatermarkMessage],
        time: usize,
    ) -> Result<Var> {
        self.wm_encoder.encode(s, messages, time)
    }

    /// Runs the configured number of imprint iterations, re-attending to the
    /// same watermark feature each time.
    pub fn imprint(&self, s: &Session, carrier: &Var, watermark: &Var) -> Result<Var> {
        let mut h = carrier.clone();
        for i in 0..self.config.imprint_iters {
            let unit = if self.config.share_imprint_weights {
                &self.imprints[0]
            } else {
                &self.imprints[i]
            };
            h = unit.forward(s, &h, watermark)?;
        }
        Ok(h)
    }

    /// Quantizes features with straight-through gradients: the forward value
    /// is the sum of selected codewords, the backward Jacobian is identity.
    pub fn quantize_straight_through(&self, s: &Session, z: &Var) -> Result<(Quantized, Var)> {
        let zv = z.value();
        let q = self.quantizer.quantize(&zv)?;
        let mut delta = q.restored.clone();
        for (d, &orig) in delta.data_mut().iter_mut().zip(zv.data()) {
            *d -= orig;
        }
        let zq = z.add(&s.constant(delta))?;
        Ok((q, zq))
    }

    /// Features `[B, T, speech_dim]` -> waveform `[B, T * hop_total]` in
    /// (-1, 1).
    pub fn decode_speech(&self, s: &Session, features: &Var) -> Result<Var> {
        self.decoder.forward(s, features)
    }

    /// Differentiable log-mel of a waveform `[B, L]`.
    pub fn mel(&self, s: &Session, wav: &Var) -> Result<Var> {
        self.mel_graph.forward(s, wav)
    }

    /// Per-digit logits from a log-mel map `[B, frames, mels]`.
    pub fn extract_logits(&self, s: &Session, mel: &Var) -> Result<Vec<Var>> {
        self.extractor.logits(s, mel)
    }

    /// Per-digit probability rows (softmax over the base).
    pub fn extract_probabilities(&self, s: &Session, mel: &Var) -> Result<Vec<Var>> {
        self.extractor.probabilities(s, mel)
    }

    // ── value-level inference ───────────────────────────────────────────────

    /// Embeds a message into a carrier: encode, imprint, quantize. Returns
    /// the packed token stream and the reconstructed watermarked clip.
    pub fn embed(&self, clip: &AudioClip, msg: &WatermarkMessage) -> Result<(CodeStream, AudioClip)> {
        self.check_message(msg)?;
        let s = Session::frozen();
        let wav = s.input(self.waveform_batch(&[clip])?);
        let carrier = self.encode_speech(&s, &wav)?;
        let t = carrier.shape()[1];
        let watermark = self.encode_watermark(&s, std::slice::from_ref(msg), t)?;
        let fused = self.imprint(&s, &carrier, &watermark)?;
        let (q, zq) = self.quantize_straight_through(&s, &fused)?;
        let decoded = self.decode_speech(&s, &zq)?;
        let samples = decoded.value().into_data();
        let clipped = AudioClip::new(samples[..clip.len()].to_vec(), self.config.sample_rate)?;
        let stream = CodeStream {
            sample_rate: self.config.sample_rate,
            frame_rate: self.config.frame_rate(),
            n_codebooks: self.config.n_codebooks as u16,
            codebook_size: self.config.codebook_size as u32,
            n_frames: t as u32,
            indices: q.indices,
        };
        Ok((stream, clipped))
    }

    /// Reconstructs a waveform from a token stream. The output length is a
    /// whole number of frames; any embed-time padding stays attached.
    pub fn decode_stream(&self, stream: &CodeStream) -> Result<AudioClip> {
        stream.validate()?;
        if stream.sample_rate != self.config.sample_rate
            || stream.n_codebooks as usize != self.config.n_codebooks
            || stream.codebook_size as usize != self.config.codebook_size
        {
            return Err(Error::Format(format!(
                "stream geometry ({} Hz, {} codebooks of {}) does not match the model ({} Hz, {} of {})",
                stream.sample_rate,
                stream.n_codebooks,
                stream.codebook_size,
                self.config.sample_rate,
                self.config.n_codebooks,
                self.config.codebook_size
            )));
        }
        let t = stream.n_frames as usize;
        let features = self
            .quantizer
            .decode(&stream.indices, t)?
            .reshape(&[1, t, self.config.speech_dim])?;
        let s = Session::frozen();
        let wav = self.decode_speech(&s, &s.input(features))?;
        AudioClip::new(wav.value().into_data(), self.config.sample_rate)
    }

    /// Extracts the watermark from a clip via its mel spectrogram. Returns
    /// the decoded message and the per-digit probability rows.
    pub fn extract(&self, clip: &AudioClip) -> Result<(WatermarkMessage, Vec<Vec<f64>>)> {
        let mel = mel_spectrogram(clip, &self.config.mel)?;
        self.extract_from_mel(&mel)
    }

    /// Extraction entry point for an already-computed mel spectrogram.
    pub fn extract_from_mel(&self, mel: &MelSpec) -> Result<(WatermarkMessage, Vec<Vec<f64>>)> {
        let s = Session::frozen();
        let mel_var = s.input(Tensor::new(
            vec![1, mel.n_frames, mel.n_mels],
            mel.values.clone(),
        )?);
        let probs = self.extract_probabilities(&s, &mel_var)?;
        let mut digits = Vec::with_capacity(probs.len());
        let mut rows = Vec::with_capacity(probs.len());
        for p in &probs {
            let row = p.value().into_data();
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i as u8)
                .unwrap();
            digits.push(argmax);
            rows.push(row);
        }
        Ok((
            WatermarkMessage::new(digits, self.config.message_base)?,
            rows,
        ))
    }

    pub fn check_message(&self, msg: &WatermarkMessage) -> Result<()> {
        if msg.len() != self.config.message_digits || msg.base() != self.config.message_base {
            return Err(Error::Message(format!(
                "message `{msg}` ({} digits base {}) does not fit the model ({} digits base {})",
                msg.len(),
                msg.base(),
                self.config.message_digits,
                self.config.message_base
            )));
        }
        Ok(())
    }

    /// Test hook: makes every imprint unit an exact identity on the carrier.
    pub fn zero_imprint_residual_paths(&self) {
        for u in &self.imprints {
            u.zero_residual_path();
        }
    }

    /// Test/inspection hook: attention weights of one imprint unit.
    pub fn imprint_attention(
        &self,
        s: &Session,
        unit: usize,
        carrier: &Var,
        watermark: &Var,
    ) -> Result<(Var, Var)> {
        self.imprints[unit].forward_with_attention(s, carrier, watermark)
    }

    // ── persistence ─────────────────────────────────────────────────────────

    /// Serializes config, parameters and quantizer state.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.text.insert(
            "config".into(),
            toml::to_string(&self.config)
                .map_err(|e| Error::Format(format!("config serialization: {e}")))?,
        );
        for p in self.parameters() {
            ck.insert(p.name().to_string(), p.value());
        }
        self.quantizer.export("rvq", &mut ck);
        Ok(ck)
    }

    /// Rebuilds a model from [`to_checkpoint`](Self::to_checkpoint) output.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config_text = ck
            .text
            .get("config")
            .ok_or_else(|| Error::Format("checkpoint missing model config".into()))?;
        let config: ModelConfig = toml::from_str(config_text)
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let model = WatermarkCodec::new(config)?;
        for p in model.parameters() {
            let stored = ck.tensor(p.name())?;
            if stored.shape() != p.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor `{}` has shape {:?}, model expects {:?}",
                    p.name(),
                    stored.shape(),
                    p.shape()
                )));
            }
            p.set(stored.clone());
        }
        let mut model = model;
        model.quantizer.import("rvq", ck)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        WatermarkCodec::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            encoder_channels: vec![8, 8, 12, 16, 24],
            speech_dim: 24,
            watermark_dim: 24,
            n_heads: 2,
            extractor_channels: 4,
            ..ModelConfig::desk()
        }
    }

    fn tone(rate: u32, len: usize) -> AudioClip {
        let samples = (0..len)
            .map(|n| 0.4 * (std::f64::consts::TAU * 440.0 * n as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn one_second_desk_clip_gives_50_frames() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::frozen();
        let wav = s.input(model.waveform_batch(&[&tone(8000, 8000)]).unwrap());
        let z = model.encode_speech(&s, &wav).unwrap();
        assert_eq!(z.shape(), vec![1, 50, 24]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let clip = tone(8000, 4000);
        let s = Session::frozen();
        let wav = s.input(model.waveform_batch(&[&clip, &clip]).unwrap());
        let z = model.encode_speech(&s, &wav).unwrap().value();
        let half = z.numel() / 2;
        assert_eq!(z.data()[..half], z.data()[half..]);
    }

    #[test]
    fn empty_batch_rejected() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        assert!(matches!(
            model.waveform_batch(&[]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn watermark_frames_are_identical_after_broadcast() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::frozen();
        let msg = WatermarkMessage::parse("A30F", 4, 16).unwrap();
        let z_w = model.encode_watermark(&s, &[msg], 50).unwrap().value();
        let d = 24;
        let first = &z_w.data()[..d];
        for t in 1..50 {
            assert_eq!(&z_w.data()[t * d..(t + 1) * d], first, "frame {t} differs");
        }
    }

    #[test]
    fn different_messages_give_different_features() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::frozen();
        let a = WatermarkMessage::parse("A30F", 4, 16).unwrap();
        let b = WatermarkMessage::parse("A30E", 4, 16).unwrap();
        let za = model.encode_watermark(&s, &[a], 1).unwrap().value();
        let zb = model.encode_watermark(&s, &[b], 1).unwrap().value();
        assert_ne!(za.data(), zb.data());
    }

    #[test]
    fn imprint_preserves_carrier_shape() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let carrier = s.input(Tensor::randn(&[2, 10, 24], 1.0, &mut rng));
        let msg = WatermarkMessage::parse("0001", 4, 16).unwrap();
        let wm = model
            .encode_watermark(&s, &[msg.clone(), msg], 10)
            .unwrap();
        let fused = model.imprint(&s, &carrier, &wm).unwrap();
        assert_eq!(fused.shape(), carrier.shape());
    }

    #[test]
    fn zeroed_projections_make_imprint_exact_identity() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        model.zero_imprint_residual_paths();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let carrier = s.input(Tensor::randn(&[1, 7, 24], 1.0, &mut rng));
        let msg = WatermarkMessage::parse("BEEF", 4, 16).unwrap();
        let wm = model.encode_watermark(&s, &[msg], 7).unwrap();
        let fused = model.imprint(&s, &carrier, &wm).unwrap();
        assert_eq!(fused.value().data(), carrier.value().data());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let carrier = s.input(Tensor::randn(&[1, 6, 24], 1.0, &mut rng));
        let msg = WatermarkMessage::parse("1234", 4, 16).unwrap();
        let wm = model.encode_watermark(&s, &[msg], 6).unwrap();
        let (_, attn) = model.imprint_attention(&s, 0, &carrier, &wm).unwrap();
        let t = 6;
        for row in attn.value().data().chunks(t) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_head_attention_matches_direct_evaluation() {
        // One head, T=1: context must equal softmax(qk/sqrt(d)) * v = v.
        let mut cfg = small_config();
        cfg.n_heads = 1;
        cfg.imprint_iters = 1;
        let model = WatermarkCodec::new(cfg).unwrap();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let carrier = s.input(Tensor::randn(&[1, 1, 24], 1.0, &mut rng));
        let msg = WatermarkMessage::parse("7A2C", 4, 16).unwrap();
        let wm = model.encode_watermark(&s, &[msg], 1).unwrap();
        let (_, attn) = model.imprint_attention(&s, 0, &carrier, &wm).unwrap();
        // With a single key the attention weight is exactly 1.
        assert_eq!(attn.value().data(), &[1.0]);
    }

    #[test]
    fn decoder_length_and_bounds() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let features = s.input(Tensor::randn(&[1, 50, 24], 1.0, &mut rng));
        let wav = model.decode_speech(&s, &features).unwrap();
        assert_eq!(wav.shape(), vec![1, 8000]);
        assert!(wav.value().data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn embed_decode_extract_shapes() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let clip = tone(8000, 8000);
        let msg = WatermarkMessage::parse("A30F", 4, 16).unwrap();
        let (stream, watermarked) = model.embed(&clip, &msg).unwrap();
        assert_eq!(stream.n_frames, 50);
        assert_eq!(stream.indices.len(), 100);
        assert_eq!(watermarked.len(), clip.len());
        assert_eq!(stream.bandwidth_bps(), 600.0);

        let decoded = model.decode_stream(&stream).unwrap();
        assert_eq!(decoded.len(), 8000);
        // Untrained model: extraction runs and yields valid digit rows.
        let (extracted, probs) = model.extract(&watermarked).unwrap();
        assert_eq!(extracted.len(), 4);
        assert_eq!(probs.len(), 4);
        for row in &probs {
            assert_eq!(row.len(), 16);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_message_shape_rejected() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let clip = tone(8000, 8000);
        let msg = WatermarkMessage::parse("123", 3, 10).unwrap();
        assert!(matches!(
            model.embed(&clip, &msg),
            Err(Error::Message(_))
        ));
    }

    #[test]
    fn straight_through_jacobian_is_identity() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let s = Session::new();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let z = s.graph().leaf(Tensor::randn(&[1, 5, 24], 1.0, &mut rng), true);
        let (_, zq) = model.quantize_straight_through(&s, &z).unwrap();
        zq.sum().backward().unwrap();
        assert!(z.grad().unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn checkpoint_round_trip_preserves_behavior() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let clip = tone(8000, 8000);
        let msg = WatermarkMessage::parse("C0DE", 4, 16).unwrap();
        let (stream_a, wm_a) = model.embed(&clip, &msg).unwrap();

        let dir = std::env::temp_dir().join(format!("sigil-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        model.save(&path).unwrap();
        let loaded = WatermarkCodec::load(&path).unwrap();
        let (stream_b, wm_b) = loaded.embed(&clip, &msg).unwrap();
        assert_eq!(stream_a, stream_b);
        assert_eq!(wm_a.samples(), wm_b.samples());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = WatermarkCodec::new(small_config()).unwrap();
        let b = WatermarkCodec::new(small_config()).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters().iter()) {
            assert_eq!(pa.name(), pb.name());
            assert_eq!(pa.value().data(), pb.value().data());
        }
    }

    #[test]
    fn shared_imprint_weights_reduce_params() {
        let mut cfg = small_config();
        let separate = WatermarkCodec::new(cfg.clone()).unwrap().param_count();
        cfg.share_imprint_weights = true;
        let shared = WatermarkCodec::new(cfg).unwrap().param_count();
        assert!(shared < separate);
    }

    #[test]
    fn imprint_single_iteration_equals_one_unit_call() {
        let mut cfg = small_config();
        cfg.imprint_iters = 1;
        let model = WatermarkCodec::new(cfg).unwrap();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let carrier = s.input(Tensor::randn(&[1, 5, 24], 1.0, &mut rng));
        let msg = WatermarkMessage::parse("0F0F", 4, 16).unwrap();
        let wm = model.encode_watermark(&s, &[msg], 5).unwrap();
        let via_imprint = model.imprint(&s, &carrier, &wm).unwrap().value();
        let (direct, _) = model.imprint_attention(&s, 0, &carrier, &wm).unwrap();
        assert_eq!(via_imprint.data(), direct.value().data());
    }

    #[test]
    fn second_unit_zeroed_equals_one_iteration() {
        let cfg = small_config();
        let model = WatermarkCodec::new(cfg.clone()).unwrap();
        // Zero only the second unit's residual path.
        model.imprints[1].zero_residual_path();
        let s = Session::frozen();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let carrier = s.input(Tensor::randn(&[1, 5, 24], 1.0, &mut rng));
        let msg = WatermarkMessage::parse("5555", 4, 16).unwrap();
        let wm = model.encode_watermark(&s, &[msg.clone()], 5).unwrap();
        let two_iter = model.imprint(&s, &carrier, &wm).unwrap().value();
        let (one_iter, _) = model.imprint_attention(&s, 0, &carrier, &wm).unwrap();
        assert_eq!(two_iter.data(), one_iter.value().data());
    }

    #[test]
    fn padded_mel_changes_pooled_logits_little() {
        let model = WatermarkCodec::new(small_config()).unwrap();
        let clip = tone(8000, 8000);
        let mel = mel_spectrogram(&clip, &model.config.mel).unwrap();
        let s = Session::frozen();
        let base = s.input(Tensor::new(vec![1, mel.n_frames, mel.n_mels], mel.values.clone()).unwrap());
        let logits_a: Vec<f64> = model
            .extract_logits(&s, &base)
            .unwrap()
            .iter()
            .flat_map(|l| l.value().into_data())
            .collect();
        // Trailing silence: 12.5% more frames pinned at the log floor.
        let extra = mel.n_frames / 8;
        let mut padded = mel.values.clone();
        padded.extend(vec![model.config.mel.log_floor.ln(); extra * mel.n_mels]);
        let padded_var = s.input(
            Tensor::new(vec![1, mel.n_frames + extra, mel.n_mels], padded).unwrap(),
        );
        let logits_b: Vec<f64> = model
            .extract_logits(&s, &padded_var)
            .unwrap()
            .iter()
            .flat_map(|l| l.value().into_data())
            .collect();
        let worst = logits_a
            .iter()
            .zip(&logits_b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // Mean pooling dilutes by at most ~the padded fraction of the range.
        assert!(worst < 0.75, "pooled logits moved by {worst}");
    }

    #[test]
    fn random_messages_cover_the_space() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            seen.insert(WatermarkMessage::random(4, 16, &mut rng).unwrap().to_text());
        }
        assert!(seen.len() > 150);
    }
}
