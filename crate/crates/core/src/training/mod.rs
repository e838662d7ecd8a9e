//! Joint end-to-end optimization of codec reconstruction and watermark
//! recovery with the disturbance layer in the loop.

pub mod disc;
pub mod disturb;
pub mod losses;

pub use losses::{mel_recon_loss, watermark_ce_loss};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::attack::AttackKind;
use crate::dsp::mel::mel_spectrogram;
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::model::{WatermarkCodec, WatermarkMessage};
use crate::quantizer::Quantized;
use crate::tensor::checkpoint::{atomic_write, Checkpoint};
use crate::tensor::{adam_step, AdamParams, AdamState, Session, Tensor, Var};
use disc::Discriminator;
use disturb::apply_attack_graph;
use losses::{feature_match, lsgan_discriminator, lsgan_generator, watermark_ce};

/// Training-run settings (model hyperparameters live in `ModelConfig`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// When set, the learning rate decays linearly from `lr` to this value
    /// across the step budget.
    #[serde(default)]
    pub lr_final: Option<f64>,
    /// Attack pool sampled per item per step; identity is always included
    /// so clean extraction is never starved.
    pub attacks: Vec<AttackKind>,
    pub log_interval: u64,
    pub checkpoint_interval: u64,
    /// Enables the waveform discriminator and adversarial terms.
    #[serde(default)]
    pub adversarial: bool,
    /// Per-item probability that the extraction path reads the
    /// pre-quantization features (quantizer dropout). Keeps the watermark
    /// channel trainable while codebooks are still settling; reconstruction
    /// always goes through the quantizer.
    #[serde(default = "default_bypass_p")]
    pub quantizer_bypass_p: f64,
    /// Linearly anneals the bypass probability to zero by this step, so
    /// late training matches the fully quantized inference path.
    #[serde(default)]
    pub quantizer_bypass_anneal_steps: Option<u64>,
    /// Stop early once the probe digit accuracy reaches this value at a log
    /// point (None trains for the full step budget).
    #[serde(default)]
    pub stop_at_probe_accuracy: Option<f64>,
    /// Train on random contiguous crops of this many samples instead of the
    /// full clips (evaluation always uses full clips).
    #[serde(default)]
    pub crop_samples: Option<usize>,
    /// Reconstruction-side weights (mel, waveform, commitment) stay at zero
    /// until `recon_delay_steps`, then ramp linearly to their configured
    /// values by `recon_warmup_steps`. Lets the watermark channel establish
    /// itself before the codec objectives touch the shared layers.
    #[serde(default)]
    pub recon_warmup_steps: Option<u64>,
    #[serde(default)]
    pub recon_delay_steps: u64,
    /// Until this step the disturbance layer only applies identity, so the
    /// extraction channel bootstraps on clean audio before robustness
    /// training starts.
    #[serde(default)]
    pub attack_warmup_steps: Option<u64>,
    pub seed: u64,
}

fn default_bypass_p() -> f64 {
    0.5
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 2,
            lr: 2e-3,
            lr_final: None,
            attacks: vec![
                AttackKind::Identity,
                AttackKind::AmplitudeReduction { factor: 0.9 },
                AttackKind::Noise { snr_db: 20.0 },
            ],
            log_interval: 25,
            checkpoint_interval: 1000,
            adversarial: false,
            quantizer_bypass_p: default_bypass_p(),
            quantizer_bypass_anneal_steps: None,
            stop_at_probe_accuracy: None,
            crop_samples: None,
            recon_warmup_steps: None,
            recon_delay_steps: 0,
            attack_warmup_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The sampled pool: configured attacks with identity prepended when
    /// missing.
    pub fn attack_pool(&self) -> Vec<AttackKind> {
        let mut pool = self.attacks.clone();
        if !pool.iter().any(|k| *k == AttackKind::Identity) {
            pool.insert(0, AttackKind::Identity);
        }
        pool
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.log_interval == 0 || self.checkpoint_interval == 0 {
            return Err(Error::Config(
                "log_interval and checkpoint_interval must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.quantizer_bypass_p) {
            return Err(Error::Config(format!(
                "quantizer_bypass_p {} not in [0, 1]",
                self.quantizer_bypass_p
            )));
        }
        Ok(())
    }
}

/// Per-step loss summary. `total` is the weighted sum of enabled components.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub mel_recon: f64,
    pub waveform_recon: f64,
    pub quantizer: f64,
    pub watermark_ce: f64,
    pub adversarial_g: Option<f64>,
    pub adversarial_d: Option<f64>,
    pub feature_match: Option<f64>,
    pub total: f64,
    /// How many true-digit probabilities hit the epsilon clamp.
    pub ce_clamp_events: usize,
}

struct StepLosses {
    total: Var,
    mel: f64,
    waveform: f64,
    commit: f64,
    ce: f64,
    adv_g: Option<f64>,
    feat: Option<f64>,
    clamp_events: usize,
    quantized: Quantized,
}

/// One training run: model, optimizer state, RNG stream and step counter.
/// Checkpoints restore all of it, so a resumed run reproduces the
/// uninterrupted loss trajectory bitwise.
pub struct Trainer {
    pub model: WatermarkCodec,
    pub config: TrainConfig,
    hp: AdamParams,
    opt: AdamState,
    disc: Option<Discriminator>,
    disc_opt: AdamState,
    rng: ChaCha20Rng,
    pub step: u64,
}

impl Trainer {
    pub fn new(model: WatermarkCodec, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let disc = config.adversarial.then(|| Discriminator::new(&mut rng));
        Ok(Trainer {
            hp: AdamParams {
                lr: config.lr,
                ..Default::default()
            },
            opt: AdamState::new(),
            disc,
            disc_opt: AdamState::new(),
            rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x5349_474c),
            step: 0,
            model,
            config,
        })
    }

    /// Uniform random message for the model's digit scheme.
    pub fn sample_message(&mut self) -> Result<WatermarkMessage> {
        WatermarkMessage::random(
            self.model.config.message_digits,
            self.model.config.message_base,
            &mut self.rng,
        )
    }

    fn build_losses(
        &mut self,
        s: &Session,
        clips: &[&AudioClip],
        messages: &[WatermarkMessage],
        carrier_mels: &[Tensor],
    ) -> Result<StepLosses> {
        if clips.len() != messages.len() || clips.is_empty() {
            return Err(Error::Dimension(format!(
                "{} clips with {} messages",
                clips.len(),
                messages.len()
            )));
        }
        let len = clips[0].len();
        let rate = self.model.config.sample_rate;
        let mut weights = self.model.config.loss_weights;
        if let Some(n) = self.config.recon_warmup_steps {
            let delay = self.config.recon_delay_steps.min(n.saturating_sub(1));
            let ramp = ((self.step.saturating_sub(delay)) as f64
                / (n - delay).max(1) as f64)
                .min(1.0);
            weights.mel *= ramp;
            weights.waveform *= ramp;
            weights.commitment *= ramp;
        }

        let wav = s.input(self.model.waveform_batch(clips)?);
        let carrier = self.model.encode_speech(s, &wav)?;
        let t = carrier.shape()[1];
        let z_w = self.model.encode_watermark(s, messages, t)?;
        let fused = self.model.imprint(s, &carrier, &z_w)?;
        let (quantized, zq) = self.model.quantize_straight_through(s, &fused)?;

        let commit = fused
            .sub(&s.constant(quantized.restored.clone()))?
            .square()
            .mean();

        let decoded = self.model.decode_speech(s, &zq)?;
        let x_w = decoded.crop_time(len)?;

        let mut clean = Tensor::zeros(&[clips.len(), len]);
        for (i, c) in clips.iter().enumerate() {
            clean.data_mut()[i * len..(i + 1) * len].copy_from_slice(c.samples());
        }
        let clean = s.constant(clean);
        let waveform_l1 = x_w.sub(&clean)?.abs().mean();

        let n_mels = self.model.config.mel.n_mels;
        let frames = carrier_mels[0].numel() / n_mels;
        let mut mel_ref = Tensor::zeros(&[clips.len(), frames, n_mels]);
        for (i, m) in carrier_mels.iter().enumerate() {
            mel_ref.data_mut()[i * frames * n_mels..(i + 1) * frames * n_mels]
                .copy_from_slice(m.data());
        }
        let mel_xw = self.model.mel(s, &x_w)?;
        let mel_l1 = mel_xw.sub(&s.constant(mel_ref))?.abs().mean();

        // Disturbance + extraction, one attack per item. Items may read the
        // pre-quantization decode (quantizer dropout) with probability
        // `quantizer_bypass_p`; reconstruction losses always use the
        // quantized path.
        let pool = match self.config.attack_warmup_steps {
            Some(n) if self.step < n => vec![crate::dsp::attack::AttackKind::Identity],
            _ => self.config.attack_pool(),
        };
        let p_bypass = match self.config.quantizer_bypass_anneal_steps {
            Some(n) if n > 0 => {
                self.config.quantizer_bypass_p
                    * (1.0 - self.step as f64 / n as f64).max(0.0)
            }
            _ => self.config.quantizer_bypass_p,
        };
        let bypass: Vec<bool> = (0..clips.len())
            .map(|_| self.rng.gen::<f64>() < p_bypass)
            .collect();
        let x_aux = if bypass.iter().any(|&b| b) {
            Some(self.model.decode_speech(s, &fused)?.crop_time(len)?)
        } else {
            None
        };
        let mut ce_terms = Vec::with_capacity(clips.len());
        let mut clamp_events = 0usize;
        for (i, msg) in messages.iter().enumerate() {
            let kind = pool[self.rng.gen_range(0..pool.len())];
            let seed = self.rng.gen::<u64>();
            let source = if bypass[i] {
                x_aux.as_ref().expect("aux decode exists when any item bypasses")
            } else {
                &x_w
            };
            let item = source.select_batch(i)?;
            let attacked = apply_attack_graph(s, &item, kind, seed, rate)?;
            let mel_att = self.model.mel(s, &attacked)?;
            let probs = self.model.extract_probabilities(s, &mel_att)?;
            let (ce_i, clamps) = watermark_ce(&probs, &[msg])?;
            clamp_events += clamps;
            ce_terms.push(ce_i);
        }
        let mut ce = ce_terms[0].clone();
        for term in &ce_terms[1..] {
            ce = ce.add(term)?;
        }
        let ce = ce.mul_scalar(1.0 / ce_terms.len() as f64);

        let mut total = mel_l1
            .mul_scalar(weights.mel)
            .add(&waveform_l1.mul_scalar(weights.waveform))?
            .add(&ce.mul_scalar(weights.watermark))?
            .add(&commit.mul_scalar(weights.commitment))?;

        let mut adv_g = None;
        let mut feat = None;
        if let Some(disc) = &self.disc {
            let (fake_scores, fake_feats) = disc.forward(s, &x_w, true)?;
            let (_, real_feats) = disc.forward(s, &clean, true)?;
            let g = lsgan_generator(&fake_scores);
            let fm = feature_match(&real_feats, &fake_feats)?;
            adv_g = Some(g.value().item()?);
            feat = Some(fm.value().item()?);
            total = total
                .add(&g.mul_scalar(weights.adversarial))?
                .add(&fm.mul_scalar(weights.feature_match))?;
        }

        Ok(StepLosses {
            mel: mel_l1.value().item()?,
            waveform: waveform_l1.value().item()?,
            commit: commit.value().item()?,
            ce: ce.value().item()?,
            adv_g,
            feat,
            clamp_events,
            quantized,
            total,
        })
    }

    /// One optimization step over a batch of equal-length clips with their
    /// sampled messages: full pipeline, one attack per item, backward, Adam
    /// update, EMA codebook update.
    pub fn train_step(
        &mut self,
        clips: &[&AudioClip],
        messages: &[WatermarkMessage],
    ) -> Result<LossReport> {
        let carrier_mels: Vec<Tensor> = clips
            .iter()
            .map(|c| {
                mel_spectrogram(c, &self.model.config.mel).map(|m| {
                    Tensor::new(vec![m.n_frames, m.n_mels], m.values).expect("mel shape")
                })
            })
            .collect::<Result<_>>()?;
        self.train_step_cached(clips, messages, &carrier_mels)
    }

    /// [`train_step`](Self::train_step) with precomputed carrier mels
    /// (they are constant per clip, so loops cache them).
    pub fn train_step_cached(
        &mut self,
        clips: &[&AudioClip],
        messages: &[WatermarkMessage],
        carrier_mels: &[Tensor],
    ) -> Result<LossReport> {
        // Discriminator update first, on detached generator output.
        let adv_d = if self.disc.is_some() {
            Some(self.discriminator_step(clips, messages)?)
        } else {
            None
        };

        let s = Session::new();
        let losses = self.build_losses(&s, clips, messages, carrier_mels)?;
        let report = LossReport {
            step: self.step + 1,
            mel_recon: losses.mel,
            waveform_recon: losses.waveform,
            quantizer: losses.commit,
            watermark_ce: losses.ce,
            adversarial_g: losses.adv_g,
            adversarial_d: adv_d,
            feature_match: losses.feat,
            total: losses.total.value().item()?,
            ce_clamp_events: losses.clamp_events,
        };
        for (name, v) in [
            ("mel_recon", report.mel_recon),
            ("waveform_recon", report.waveform_recon),
            ("quantizer", report.quantizer),
            ("watermark_ce", report.watermark_ce),
            ("total", report.total),
        ] {
            if !v.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite loss component `{name}` at step {}",
                    report.step
                )));
            }
        }

        losses.total.backward()?;
        let pairs: Vec<_> = self
            .model
            .parameters()
            .iter()
            .filter_map(|p| s.grad_of(p).map(|g| (p.clone(), g)))
            .collect();
        let mut hp = self.hp;
        if let Some(lr_final) = self.config.lr_final {
            let frac = (self.step as f64 / self.config.steps.max(1) as f64).min(1.0);
            hp.lr = self.config.lr + (lr_final - self.config.lr) * frac;
        }
        adam_step(&pairs, &mut self.opt, &hp)?;
        self.model.quantizer.update(&losses.quantized.assignments, &mut self.rng);
        self.step += 1;
        Ok(report)
    }

    fn discriminator_step(
        &mut self,
        clips: &[&AudioClip],
        messages: &[WatermarkMessage],
    ) -> Result<f64> {
        // Generator forward without gradient tracking.
        let frozen = Session::frozen();
        let wav = frozen.input(self.model.waveform_batch(clips)?);
        let carrier = self.model.encode_speech(&frozen, &wav)?;
        let t = carrier.shape()[1];
        let z_w = self.model.encode_watermark(&frozen, messages, t)?;
        let fused = self.model.imprint(&frozen, &carrier, &z_w)?;
        let (_, zq) = self.model.quantize_straight_through(&frozen, &fused)?;
        let fake_values = self
            .model
            .decode_speech(&frozen, &zq)?
            .crop_time(clips[0].len())?
            .value();

        let len = clips[0].len();
        let mut clean = Tensor::zeros(&[clips.len(), len]);
        for (i, c) in clips.iter().enumerate() {
            clean.data_mut()[i * len..(i + 1) * len].copy_from_slice(c.samples());
        }

        let disc = self.disc.as_ref().expect("adversarial enabled");
        let s = Session::new();
        let real = s.input(clean);
        let fake = s.input(fake_values);
        let (r_scores, _) = disc.forward(&s, &real, false)?;
        let (f_scores, _) = disc.forward(&s, &fake, false)?;
        let d_loss = lsgan_discriminator(&r_scores, &f_scores)?;
        let value = d_loss.value().item()?;
        d_loss.backward()?;
        let pairs: Vec<_> = disc
            .params()
            .iter()
            .filter_map(|p| s.grad_of(p).map(|g| (p.clone(), g)))
            .collect();
        adam_step(&pairs, &mut self.disc_opt, &self.hp)?;
        Ok(value)
    }

    /// Clean-path digit accuracy over probe clips/messages (embed, decode,
    /// extract with no attack).
    pub fn probe_accuracy(
        &self,
        clips: &[&AudioClip],
        messages: &[WatermarkMessage],
    ) -> Result<f64> {
        let mut total = 0.0;
        for (clip, msg) in clips.iter().zip(messages) {
            let (_, watermarked) = self.model.embed(clip, msg)?;
            let (extracted, _) = self.model.extract(&watermarked)?;
            total += crate::eval::digit_accuracy(msg, &extracted)?;
        }
        Ok(total / clips.len() as f64)
    }

    // ── run loop ────────────────────────────────────────────────────────────

    /// Trains for `config.steps`, logging metrics every `log_interval` steps
    /// and checkpointing every `checkpoint_interval`. Returns every report.
    pub fn train_loop(&mut self, dataset: &[AudioClip], out_dir: &Path) -> Result<Vec<LossReport>> {
        self.train_loop_with(dataset, out_dir, |_, _| {})
    }

    /// [`train_loop`](Self::train_loop) with a callback invoked at every log
    /// point with the latest report and the probe digit accuracy.
    pub fn train_loop_with(
        &mut self,
        dataset: &[AudioClip],
        out_dir: &Path,
        mut on_log: impl FnMut(&LossReport, f64),
    ) -> Result<Vec<LossReport>> {
        if dataset.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        let len = dataset[0].len();
        for (i, c) in dataset.iter().enumerate() {
            if c.len() != len {
                return Err(Error::Config(format!(
                    "dataset clip {i} has {} samples, expected {len}",
                    c.len()
                )));
            }
        }
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

        let carrier_mels: Vec<Tensor> = dataset
            .iter()
            .map(|c| {
                mel_spectrogram(c, &self.model.config.mel)
                    .map(|m| Tensor::new(vec![m.n_frames, m.n_mels], m.values).expect("mel shape"))
            })
            .collect::<Result<_>>()?;

        // Probe set: fixed clips and messages derived statelessly from the
        // seed, so resumed runs evaluate the same probe.
        let mut probe_rng = ChaCha20Rng::seed_from_u64(self.config.seed ^ 0x70726f62);
        let probe_n = dataset.len().min(4);
        let probe_msgs: Vec<WatermarkMessage> = (0..probe_n)
            .map(|_| {
                WatermarkMessage::random(
                    self.model.config.message_digits,
                    self.model.config.message_base,
                    &mut probe_rng,
                )
            })
            .collect::<Result<_>>()?;
        let probe_clips: Vec<&AudioClip> = dataset.iter().take(probe_n).collect();

        let crop = self.config.crop_samples.filter(|&c| c > 0 && c < len);
        let mut rows = vec![metrics_header()];
        let mut reports = Vec::new();
        while self.step < self.config.steps {
            let batch_idx: Vec<usize> = (0..self.config.batch_size)
                .map(|_| self.rng.gen_range(0..dataset.len()))
                .collect();
            let messages: Vec<WatermarkMessage> = (0..batch_idx.len())
                .map(|_| self.sample_message())
                .collect::<Result<_>>()?;
            let report = match crop {
                None => {
                    let clips: Vec<&AudioClip> = batch_idx.iter().map(|&i| &dataset[i]).collect();
                    let mels: Vec<Tensor> = batch_idx
                        .iter()
                        .map(|&i| carrier_mels[i].clone())
                        .collect();
                    self.train_step_cached(&clips, &messages, &mels)?
                }
                Some(c) => {
                    let cropped: Vec<AudioClip> = batch_idx
                        .iter()
                        .map(|&i| {
                            let start = self.rng.gen_range(0..=len - c);
                            AudioClip::new(
                                dataset[i].samples()[start..start + c].to_vec(),
                                dataset[i].sample_rate(),
                            )
                        })
                        .collect::<Result<_>>()?;
                    let refs: Vec<&AudioClip> = cropped.iter().collect();
                    self.train_step(&refs, &messages)?
                }
            };

            let mut stop = false;
            if report.step % self.config.log_interval == 0 {
                let acc = self.probe_accuracy(&probe_clips, &probe_msgs)?;
                rows.push(metrics_row(&report, acc));
                on_log(&report, acc);
                if let Some(threshold) = self.config.stop_at_probe_accuracy {
                    stop = acc >= threshold;
                }
            }
            if report.step % self.config.checkpoint_interval == 0 {
                self.save_state(&out_dir.join(format!("state-{:06}.ckpt", report.step)))?;
                atomic_write(&out_dir.join("metrics.csv"), rows.join("\n").as_bytes())?;
            }
            reports.push(report);
            if stop {
                break;
            }
        }
        self.save_state(&out_dir.join("state-final.ckpt"))?;
        atomic_write(&out_dir.join("metrics.csv"), rows.join("\n").as_bytes())?;
        Ok(reports)
    }

    // ── state persistence ───────────────────────────────────────────────────

    /// Serializes model, optimizer moments, RNG position and step counter.
    pub fn save_state(&self, path: &Path) -> Result<()> {
        let mut ck = self.model.to_checkpoint()?;
        ck.text.insert(
            "train_config".into(),
            toml::to_string(&self.config)
                .map_err(|e| Error::Format(format!("train config serialization: {e}")))?,
        );
        for p in self.model.parameters() {
            if let Some((m, v)) = self.opt.moments_of(&p) {
                ck.insert(format!("adam.m.{}", p.name()), m.clone());
                ck.insert(format!("adam.v.{}", p.name()), v.clone());
            }
        }
        if let Some(disc) = &self.disc {
            for p in disc.params() {
                ck.insert(p.name().to_string(), p.value());
                if let Some((m, v)) = self.disc_opt.moments_of(&p) {
                    ck.insert(format!("adam.m.{}", p.name()), m.clone());
                    ck.insert(format!("adam.v.{}", p.name()), v.clone());
                }
            }
            ck.meta.insert("disc_adam_step".into(), self.disc_opt.step);
        }
        ck.meta.insert("step".into(), self.step);
        ck.meta.insert("adam_step".into(), self.opt.step);
        let seed_bytes = self.rng.get_seed();
        for (i, chunk) in seed_bytes.chunks(8).enumerate() {
            ck.meta.insert(
                format!("rng_seed{i}"),
                u64::from_le_bytes(chunk.try_into().unwrap()),
            );
        }
        let pos = self.rng.get_word_pos();
        ck.meta.insert("rng_pos_lo".into(), pos as u64);
        ck.meta.insert("rng_pos_hi".into(), (pos >> 64) as u64);
        ck.save(path)
    }

    /// Restores a trainer saved by [`save_state`](Self::save_state).
    pub fn load_state(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let model = WatermarkCodec::from_checkpoint(&ck)?;
        let config_text = ck
            .text
            .get("train_config")
            .ok_or_else(|| Error::Format("checkpoint missing train config".into()))?;
        let config: TrainConfig = toml::from_str(config_text)
            .map_err(|e| Error::Format(format!("train config: {e}")))?;
        let mut trainer = Trainer::new(model, config)?;
        trainer.step = ck.meta_u64("step")?;
        trainer.opt.step = ck.meta_u64("adam_step")?;
        for p in trainer.model.parameters() {
            let m = ck.tensors.get(&format!("adam.m.{}", p.name()));
            let v = ck.tensors.get(&format!("adam.v.{}", p.name()));
            if let (Some(m), Some(v)) = (m, v) {
                trainer.opt.set_moments(&p, m.clone(), v.clone());
            }
        }
        if let Some(disc) = &trainer.disc {
            trainer.disc_opt.step = ck.meta_u64("disc_adam_step").unwrap_or(0);
            for p in disc.params() {
                p.set(ck.tensor(p.name())?.clone());
                let m = ck.tensors.get(&format!("adam.m.{}", p.name()));
                let v = ck.tensors.get(&format!("adam.v.{}", p.name()));
                if let (Some(m), Some(v)) = (m, v) {
                    trainer.disc_opt.set_moments(&p, m.clone(), v.clone());
                }
            }
        }
        let mut seed = [0u8; 32];
        for i in 0..4 {
            let v = ck.meta_u64(&format!("rng_seed{i}"))?;
            seed[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
        }
        let pos =
            (ck.meta_u64("rng_pos_hi")? as u128) << 64 | ck.meta_u64("rng_pos_lo")? as u128;
        trainer.rng = ChaCha20Rng::from_seed(seed);
        trainer.rng.set_word_pos(pos);
        Ok(trainer)
    }
}

fn metrics_header() -> String {
    "step,mel_recon,waveform_recon,quantizer,watermark_ce,adversarial_g,adversarial_d,feature_match,total,probe_digit_accuracy".to_string()
}

fn metrics_row(r: &LossReport, probe_acc: f64) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    format!(
        "{},{:.9},{:.9},{:.9},{:.9},{},{},{},{:.9},{:.6}",
        r.step,
        r.mel_recon,
        r.waveform_recon,
        r.quantizer,
        r.watermark_ce,
        opt(r.adversarial_g),
        opt(r.adversarial_d),
        opt(r.feature_match),
        r.total,
        probe_acc
    )
}

/// Checkpoint file path for a given training step, as written by the loop.
pub fn state_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("state-{step:06}.ckpt"))
}
