//! Short-time Fourier transform with centered (reflect-padded) frames.

use crate::dsp::fft::{Complex, Fft};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    pub fn taps(&self, size: usize) -> Vec<f64> {
        match self {
            // Periodic Hann, the usual analysis choice.
            Window::Hann => (0..size)
                .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / size as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; size],
        }
    }
}

/// One-sided complex spectrogram: `n_frames x (fft_size/2 + 1)` bins.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub n_frames: usize,
    pub n_bins: usize,
    pub fft_size: usize,
    pub hop: usize,
    /// Row-major `[frame][bin]`.
    pub bins: Vec<Complex>,
}

impl ComplexSpectrogram {
    pub fn bin(&self, frame: usize, bin: usize) -> Complex {
        self.bins[frame * self.n_bins + bin]
    }

    /// Magnitudes with the same tiny epsilon the differentiable path uses,
    /// so the two mel routes agree to ~1e-9.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im + MAG_EPS).sqrt())
            .collect()
    }
}

/// Keeps sqrt differentiable at silence; shared by both mel routes.
pub(crate) const MAG_EPS: f64 = 1e-12;

/// Frame count for a clip of `len` samples under centered framing
/// (reflect pad of `fft_size/2` on both sides).
pub fn n_frames(len: usize, fft_size: usize, hop: usize) -> usize {
    (len + 2 * (fft_size / 2) - fft_size) / hop + 1
}

/// Centered STFT: reflect-pads by `fft_size/2`, windows each frame and
/// returns the one-sided spectrum per frame.
pub fn stft(
    clip: &AudioClip,
    fft_size: usize,
    hop: usize,
    window: Window,
) -> Result<ComplexSpectrogram> {
    if hop == 0 || hop > fft_size {
        return Err(Error::Config(format!(
            "hop {hop} must be in 1..=fft_size ({fft_size})"
        )));
    }
    let pad = fft_size / 2;
    let len = clip.len();
    if len < pad + 1 {
        return Err(Error::Dimension(format!(
            "clip of {len} samples is shorter than one frame (fft size {fft_size})"
        )));
    }
    let plan = Fft::new(fft_size)?;
    let taps = window.taps(fft_size);
    let frames = n_frames(len, fft_size, hop);
    let n_bins = fft_size / 2 + 1;
    let x = clip.samples();
    let mut bins = Vec::with_capacity(frames * n_bins);
    let mut buf = vec![Complex::default(); fft_size];
    for f in 0..frames {
        for (j, slot) in buf.iter_mut().enumerate() {
            let src = reflect(f * hop + j, pad, len);
            *slot = Complex::new(x[src] * taps[j], 0.0);
        }
        plan.forward(&mut buf)?;
        bins.extend_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram {
        n_frames: frames,
        n_bins,
        fft_size,
        hop,
        bins,
    })
}

fn reflect(padded: usize, pad: usize, len: usize) -> usize {
    let i = padded as isize - pad as isize;
    if i < 0 {
        (-i) as usize
    } else if i as usize >= len {
        2 * len - 2 - i as usize
    } else {
        i as usize
    }
}
