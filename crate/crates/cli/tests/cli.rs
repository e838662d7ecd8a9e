//! End-to-end tests of the `sigil` binary: every subcommand, the exit-code
//! contract, and determinism under fixed seeds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sigil() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sigil"))
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sigil-cli-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn sigil");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A tiny run config that trains in a couple of seconds.
fn write_tiny_config(dir: &Path) -> PathBuf {
    let text = format!(
        r#"
dataset_dir = "{dir}/corpus"
run_dir = "{dir}/run"
report_dir = "{dir}/reports"
trials = 2

[model]
sample_rate = 8000
encoder_strides = [2, 4, 4, 5]
encoder_channels = [4, 6, 8, 10, 12]
speech_dim = 12
watermark_dim = 12
n_heads = 2
imprint_iters = 1
message_digits = 4
message_base = 16
n_codebooks = 1
codebook_size = 8
extractor_channels = 2
seed = 0

[model.mel]
fft_size = 256
hop = 64
n_mels = 40
fmin = 0.0
fmax = 4000.0
log_floor = 1e-5

[train]
steps = 4
batch_size = 1
lr = 0.001
log_interval = 2
checkpoint_interval = 4
seed = 5
attacks = [{{ kind = "identity" }}]
"#,
        dir = dir.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn synth(dir: &Path, n: usize) {
    run(sigil().args([
        "synth-corpus",
        "--out",
        dir.join("corpus").to_str().unwrap(),
        "--n-clips",
        &n.to_string(),
        "--duration",
        "1.0",
        "--sample-rate",
        "8000",
        "--seed",
        "17",
    ]));
}

#[test]
fn synth_corpus_is_deterministic() {
    let dir = work_dir("synth");
    synth(&dir, 3);
    let first = std::fs::read(dir.join("corpus/clip-000.wav")).unwrap();
    std::fs::remove_dir_all(dir.join("corpus")).unwrap();
    synth(&dir, 3);
    let second = std::fs::read(dir.join("corpus/clip-000.wav")).unwrap();
    assert_eq!(first, second, "same seed must give identical corpus bytes");
    assert!(dir.join("corpus/manifest.toml").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn write_default_emits_loadable_config() {
    let dir = work_dir("default");
    let cfg = dir.join("run.toml");
    run(sigil().args(["train", "--config", cfg.to_str().unwrap(), "--write-default"]));
    let text = std::fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("[model]"));
    assert!(text.contains("encoder_strides"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = work_dir("pipeline");
    synth(&dir, 2);
    let cfg = write_tiny_config(&dir);

    // Train a tiny model.
    let out = run(sigil().args(["train", "--config", cfg.to_str().unwrap()]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("step"), "{stdout}");
    let model = dir.join("run/state-final.ckpt");
    assert!(model.exists());

    // Embed: writes a stream and reports bandwidth.
    let wav = dir.join("corpus/clip-000.wav");
    let stream = dir.join("msg.bits");
    let out = run(sigil().args([
        "embed",
        "--model",
        model.to_str().unwrap(),
        "--wav",
        wav.to_str().unwrap(),
        "--message",
        "a30f",
        "--out",
        stream.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("bandwidth 150 bps"), "{stdout}");

    // Decode the stream back to audio.
    let decoded = dir.join("decoded.wav");
    run(sigil().args([
        "decode",
        "--model",
        model.to_str().unwrap(),
        "--stream",
        stream.to_str().unwrap(),
        "--out",
        decoded.to_str().unwrap(),
    ]));
    assert!(decoded.exists());

    // Extract prints exactly four hex digits plus confidences.
    let out = run(sigil().args([
        "extract",
        "--model",
        model.to_str().unwrap(),
        "--wav",
        decoded.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let first = stdout.lines().next().unwrap();
    assert_eq!(first.len(), 4, "expected 4 digits, got `{first}`");
    assert!(first.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(stdout.contains("confidence:"));

    // Attack a wav.
    let attacked = dir.join("attacked.wav");
    let out = run(sigil().args([
        "attack",
        "--kind",
        "resplice",
        "--wav",
        wav.to_str().unwrap(),
        "--out",
        attacked.to_str().unwrap(),
        "--seed",
        "3",
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("8000 -> 5334"), "{stdout}");

    // Roundtrip prints the one-line verdict.
    let out = run(sigil().args([
        "roundtrip",
        "--model",
        model.to_str().unwrap(),
        "--wav",
        wav.to_str().unwrap(),
        "--message",
        "A30F",
        "--attack",
        "ar",
        "--seed",
        "1",
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("roundtrip message=A30F attack=ar"), "{stdout}");
    assert!(stdout.contains("digit_accuracy="), "{stdout}");

    // Eval writes the report files with the fixed schema.
    run(sigil().args(["eval", "--config", cfg.to_str().unwrap(), "--trials", "1"]));
    let csv = std::fs::read_to_string(dir.join("reports/robustness.csv")).unwrap();
    assert!(csv.starts_with(
        "model,n_codebooks,bandwidth_bps,capacity_bps,normal,rsp,noise,sd,ar,ea,lp,resplice,average"
    ));
    assert!(dir.join("reports/robustness.json").exists());
    let quality = std::fs::read_to_string(dir.join("reports/quality.csv")).unwrap();
    assert!(quality.contains("pesq,stoi,visqol,mos"));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_is_deterministic_under_seed() {
    let dir = work_dir("eval-det");
    synth(&dir, 2);
    let cfg = write_tiny_config(&dir);
    run(sigil().args(["train", "--config", cfg.to_str().unwrap()]));
    run(sigil().args(["eval", "--config", cfg.to_str().unwrap(), "--seed", "9"]));
    let first = std::fs::read(dir.join("reports/robustness.csv")).unwrap();
    run(sigil().args(["eval", "--config", cfg.to_str().unwrap(), "--seed", "9"]));
    let second = std::fs::read(dir.join("reports/robustness.csv")).unwrap();
    assert_eq!(first, second);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = work_dir("exits");

    // 2: config error (missing config).
    let out = sigil()
        .args(["train", "--config", dir.join("nope.toml").to_str().unwrap()])
        .env_remove("SIGIL_CONFIG")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5), "missing file is an I/O error");

    // 2: config error (no config at all).
    let out = sigil().args(["train"]).env_remove("SIGIL_CONFIG").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 2: invalid attack kind.
    synth(&dir, 1);
    let wav = dir.join("corpus/clip-000.wav");
    let out = sigil()
        .args([
            "attack",
            "--kind",
            "mp3",
            "--wav",
            wav.to_str().unwrap(),
            "--out",
            dir.join("x.wav").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 3: format error (garbage model file).
    let bad = dir.join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let out = sigil()
        .args([
            "extract",
            "--model",
            bad.to_str().unwrap(),
            "--wav",
            wav.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // 5: I/O error (missing wav), using a real model.
    let cfg = write_tiny_config(&dir);
    run(sigil().args(["train", "--config", cfg.to_str().unwrap()]));
    let model = dir.join("run/state-final.ckpt");
    let out = sigil()
        .args([
            "extract",
            "--model",
            model.to_str().unwrap(),
            "--wav",
            dir.join("missing.wav").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));

    // 4: message error (wrong digit count).
    let out = sigil()
        .args([
            "embed",
            "--model",
            model.to_str().unwrap(),
            "--wav",
            wav.to_str().unwrap(),
            "--message",
            "A3",
            "--out",
            dir.join("s.bits").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    // Unknown flags are rejected by the parser.
    let out = sigil().args(["extract", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn help_enumerates_subcommands() {
    let out = run(sigil().arg("--help"));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "synth-corpus",
        "train",
        "embed",
        "decode",
        "extract",
        "attack",
        "eval",
        "roundtrip",
    ] {
        assert!(text.contains(sub), "help missing `{sub}`:\n{text}");
    }
}
