//! `sigil`: corpus synthesis, training, watermark embed/extract round-trips,
//! attacks and robustness reports from one binary.
//!
//! Exit codes: 0 ok, 2 config error, 3 format error, 4 model/metric error,
//! 5 I/O error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, CONFIG_ENV};
use sigil_core::dsp::attack::{apply_attack, AttackKind, AttackSpec};
use sigil_core::dsp::wav::{load_wav, save_wav};
use sigil_core::error::{Error, Result};
use sigil_core::eval::{
    digit_accuracy, quality_eval, robustness_csv, robustness_eval, robustness_json, si_snr,
    QualityReport,
};
use sigil_core::model::{WatermarkCodec, WatermarkMessage};
use sigil_core::quantizer::CodeStream;
use sigil_core::synth::{load_corpus, write_corpus, SynthSpec};
use sigil_core::tensor::checkpoint::atomic_write;
use sigil_core::training::Trainer;

#[derive(Parser)]
#[command(
    name = "sigil",
    about = "Neural speech codec with an integrated numerical watermark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic WAV corpus with a manifest.
    SynthCorpus {
        /// Output directory for WAVs and manifest.toml.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_clips: usize,
        /// Clip duration in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 8000)]
        sample_rate: u32,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Train a model as described by a run-config TOML file.
    Train {
        /// Run config path (falls back to $SIGIL_CONFIG).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write desk-scale defaults to the config path and exit.
        #[arg(long)]
        write_default: bool,
        /// Resume from a trainer state checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Embed a message into a carrier WAV and write the token stream.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Message digits (hex for base 16, decimal for base 10).
        #[arg(long)]
        message: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a WAV from a token stream.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the watermark message from a WAV.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
    },
    /// Apply one attack to a WAV.
    Attack {
        /// identity, rsp, noise, sd, ar, ea, lp or resplice.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: AttackParams,
    },
    /// Evaluate robustness and quality over a corpus; write CSV/JSON reports.
    Eval {
        /// Run config path (falls back to $SIGIL_CONFIG).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model checkpoint (defaults to <run_dir>/state-final.ckpt).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Messages per utterance (overrides the config).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Embed, decode, attack, extract; print a one-line verdict.
    Roundtrip {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        message: String,
        /// Attack applied between decode and extract.
        #[arg(long, default_value = "identity")]
        attack: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: AttackParams,
    },
}

/// Optional attack parameter overrides (defaults per attack otherwise).
#[derive(Args, Debug, Clone, Copy)]
struct AttackParams {
    /// Noise target SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Sample-dropout fraction.
    #[arg(long)]
    p: Option<f64>,
    /// Amplitude-reduction factor.
    #[arg(long)]
    factor: Option<f64>,
    /// Echo delay in milliseconds.
    #[arg(long)]
    delay_ms: Option<f64>,
    /// Echo decay.
    #[arg(long)]
    decay: Option<f64>,
    /// Low-pass cutoff in Hz.
    #[arg(long)]
    cutoff_hz: Option<f64>,
    /// Resample target rate in Hz.
    #[arg(long)]
    target_rate: Option<u32>,
}

impl AttackParams {
    fn build(&self, kind_name: &str) -> Result<AttackKind> {
        let base: AttackKind = kind_name.parse()?;
        Ok(match base {
            AttackKind::Noise { snr_db } => AttackKind::Noise {
                snr_db: self.snr_db.unwrap_or(snr_db),
            },
            AttackKind::SampleDropout { p } => AttackKind::SampleDropout {
                p: self.p.unwrap_or(p),
            },
            AttackKind::AmplitudeReduction { factor } => AttackKind::AmplitudeReduction {
                factor: self.factor.unwrap_or(factor),
            },
            AttackKind::EchoAddition { delay_ms, decay } => AttackKind::EchoAddition {
                delay_ms: self.delay_ms.unwrap_or(delay_ms),
                decay: self.decay.unwrap_or(decay),
            },
            AttackKind::LowPassFilter { .. } => AttackKind::LowPassFilter {
                cutoff_hz: self.cutoff_hz,
            },
            AttackKind::Resample { .. } => AttackKind::Resample {
                target_rate: self.target_rate,
            },
            other => other,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_path(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        .ok_or_else(|| {
            Error::Config(format!(
                "no run config: pass --config or set ${CONFIG_ENV}"
            ))
        })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthCorpus {
            out,
            n_clips,
            duration,
            sample_rate,
            seed,
        } => {
            let manifest = write_corpus(
                &SynthSpec {
                    n_clips,
                    duration_secs: duration,
                    sample_rate,
                    seed,
                },
                &out,
            )?;
            println!(
                "wrote {} clips of {:.2} s at {} Hz to {}",
                manifest.clips.len(),
                manifest.duration_secs,
                manifest.sample_rate,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            write_default,
            resume,
        } => {
            let path = config_path(config)?;
            if write_default {
                let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                let cfg = RunConfig::desk(&base);
                let text = toml::to_string_pretty(&cfg)
                    .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
                atomic_write(&path, text.as_bytes())?;
                println!("wrote default run config to {}", path.display());
                return Ok(());
            }
            let cfg = RunConfig::load(&path)?;
            let dataset = load_corpus(&cfg.dataset_dir)?;
            let mut trainer = match resume {
                Some(state) => {
                    let mut t = Trainer::load_state(&state)?;
                    t.config.steps = cfg.train.steps;
                    t
                }
                None => Trainer::new(WatermarkCodec::new(cfg.model.clone())?, cfg.train.clone())?,
            };
            println!(
                "training: {} params, {} clips, {} steps",
                trainer.model.param_count(),
                dataset.len(),
                trainer.config.steps
            );
            let started = std::time::Instant::now();
            trainer.train_loop_with(&dataset, &cfg.run_dir, |report, acc| {
                println!(
                    "step {:>6}  total {:>9.4}  mel {:>8.4}  wav {:>8.5}  ce {:>8.5}  probe_acc {:.3}",
                    report.step, report.total, report.mel_recon, report.waveform_recon,
                    report.watermark_ce, acc
                );
            })?;
            println!(
                "done in {:.1} s; final state: {}",
                started.elapsed().as_secs_f64(),
                cfg.run_dir.join("state-final.ckpt").display()
            );
            Ok(())
        }
        Command::Embed {
            model,
            wav,
            message,
            out,
        } => {
            let model = WatermarkCodec::load(&model)?;
            let clip = load_wav(&wav)?;
            let msg = WatermarkMessage::parse(
                &message,
                model.config.message_digits,
                model.config.message_base,
            )?;
            let (stream, _) = model.embed(&clip, &msg)?;
            atomic_write(&out, &stream.pack()?)?;
            println!(
                "embedded {} into {} frames: {} bits/frame, bandwidth {} bps, capacity {:.2} bits -> {}",
                msg,
                stream.n_frames,
                stream.bits_per_frame(),
                stream.bandwidth_bps(),
                model.config.capacity_bits(),
                out.display()
            );
            Ok(())
        }
        Command::Decode { model, stream, out } => {
            let model = WatermarkCodec::load(&model)?;
            let bytes = std::fs::read(&stream).map_err(|e| Error::io(&stream, e))?;
            let stream = CodeStream::unpack(&bytes)?;
            let clip = model.decode_stream(&stream)?;
            save_wav(&clip, &out)?;
            println!(
                "decoded {} frames at {} bps into {} samples -> {}",
                stream.n_frames,
                stream.bandwidth_bps(),
                clip.len(),
                out.display()
            );
            Ok(())
        }
        Command::Extract { model, wav } => {
            let model = WatermarkCodec::load(&model)?;
            let clip = load_wav(&wav)?;
            let (msg, probs) = model.extract(&clip)?;
            let confidences: Vec<String> = probs
                .iter()
                .map(|row| {
                    format!(
                        "{:.3}",
                        row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    )
                })
                .collect();
            println!("{msg}");
            println!("confidence: {}", confidences.join(" "));
            Ok(())
        }
        Command::Attack {
            kind,
            wav,
            out,
            seed,
            params,
        } => {
            let kind = params.build(&kind)?;
            let clip = load_wav(&wav)?;
            let attacked = apply_attack(&clip, &AttackSpec::new(kind, seed))?;
            save_wav(&attacked, &out)?;
            println!(
                "{}: {} -> {} samples -> {}",
                kind.cli_name(),
                clip.len(),
                attacked.len(),
                out.display()
            );
            Ok(())
        }
        Command::Eval {
            config,
            model,
            trials,
            seed,
        } => {
            let cfg = RunConfig::load(&config_path(config)?)?;
            let model_path = model.unwrap_or_else(|| cfg.run_dir.join("state-final.ckpt"));
            let model = WatermarkCodec::load(&model_path)?;
            let clips = load_corpus(&cfg.dataset_dir)?;
            let trials = trials.unwrap_or(cfg.trials);
            let pool = cfg.eval_attack_pool()?;
            let matrix = robustness_eval(&model, &clips, &pool, trials, seed)?;
            let quality = quality_eval(&model, &clips, seed)?;
            std::fs::create_dir_all(&cfg.report_dir).map_err(|e| Error::io(&cfg.report_dir, e))?;
            atomic_write(
                &cfg.report_dir.join("robustness.csv"),
                robustness_csv(std::slice::from_ref(&matrix)).as_bytes(),
            )?;
            atomic_write(
                &cfg.report_dir.join("robustness.json"),
                robustness_json(std::slice::from_ref(&matrix))?.as_bytes(),
            )?;
            atomic_write(
                &cfg.report_dir.join("quality.csv"),
                format!("{}\n{}", QualityReport::csv_header(), quality.csv_row()).as_bytes(),
            )?;
            println!("{}", sigil_core::eval::RobustnessMatrix::csv_header());
            println!("{}", matrix.csv_row());
            println!(
                "quality: si_snr {:.2} dB, lsd {:.4} ({} clips x {} trials)",
                quality.si_snr_db,
                quality.log_spectral_distance,
                clips.len(),
                trials
            );
            println!("reports in {}", cfg.report_dir.display());
            Ok(())
        }
        Command::Roundtrip {
            model,
            wav,
            message,
            attack,
            seed,
            params,
        } => {
            let model = WatermarkCodec::load(&model)?;
            let clip = load_wav(&wav)?;
            let msg = WatermarkMessage::parse(
                &message,
                model.config.message_digits,
                model.config.message_base,
            )?;
            let kind = params.build(&attack)?;
            let (stream, _) = model.embed(&clip, &msg)?;
            let decoded = model.decode_stream(&stream)?;
            let trimmed = decoded.truncated(clip.len().min(decoded.len()))?;
            let snr = si_snr(&clip.truncated(trimmed.len())?, &trimmed)?;
            let attacked = apply_attack(&trimmed, &AttackSpec::new(kind, seed))?;
            let (extracted, _) = model.extract(&attacked)?;
            let acc = digit_accuracy(&msg, &extracted)?;
            let verdict = if acc == 1.0 { "PASS" } else { "FAIL" };
            println!(
                "roundtrip message={msg} attack={} extracted={extracted} digit_accuracy={acc:.3} si_snr_db={snr:.2} bandwidth_bps={} {verdict}",
                kind.cli_name(),
                stream.bandwidth_bps()
            );
            Ok(())
        }
    }
}
