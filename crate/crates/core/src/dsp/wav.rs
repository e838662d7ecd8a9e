//! 16-bit PCM WAV reading and writing.

use std::path::Path;

use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Loads a 16-bit PCM WAV, downmixing multichannel input to mono by
/// averaging. Samples map to `[-1, 1)` by division by 32768.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "{}: only 16-bit PCM WAV is supported, got {:?} at {} bits",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }
    let mut samples = Vec::new();
    let mut acc = 0.0f64;
    let mut in_frame = 0usize;
    for s in reader.into_samples::<i16>() {
        let v = s.map_err(|e| wav_err(path, e))? as f64 / 32768.0;
        acc += v;
        in_frame += 1;
        if in_frame == channels {
            samples.push(acc / channels as f64);
            acc = 0.0;
            in_frame = 0;
        }
    }
    if samples.is_empty() {
        return Err(Error::Format(format!(
            "{}: no complete audio frames",
            path.display()
        )));
    }
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV (atomically: temp file + rename).
pub fn save_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    {
        let mut writer = hound::WavWriter::create(&tmp, spec).map_err(|e| wav_err(&tmp, e))?;
        for &v in clip.samples() {
            let q = (v * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            writer.write_sample(q).map_err(|e| wav_err(&tmp, e))?;
        }
        writer.finalize().map_err(|e| wav_err(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("sigil-wav-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn zero_clip_round_trips_to_zero() {
        let path = tmp_path("zero.wav");
        let clip = AudioClip::new(vec![0.0; 128], 8000).unwrap();
        save_wav(&clip, &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert!(back.samples().iter().all(|&v| v == 0.0));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn scaling_is_16384_to_half() {
        let path = tmp_path("half.wav");
        let clip = AudioClip::new(vec![0.5; 4], 8000).unwrap();
        save_wav(&clip, &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.samples()[0], 16384.0 / 32768.0);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn random_round_trip_within_quantization_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..2000).map(|_| rng.gen_range(-0.999..0.999)).collect();
        let clip = AudioClip::new(samples, 8000).unwrap();
        let path = tmp_path("rt.wav");
        save_wav(&clip, &path).unwrap();
        let back = load_wav(&path).unwrap();
        let worst = clip
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1.0 / 32768.0, "worst {worst}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_file_is_a_format_error() {
        let path = tmp_path("bad.wav");
        std::fs::write(&path, b"not a wav at all").unwrap();
        let err = load_wav(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        std::fs::remove_file(&path).ok();
    }
}
