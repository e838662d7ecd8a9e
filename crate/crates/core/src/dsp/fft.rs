//! Iterative radix-2 FFT, sized for analysis windows up to a few thousand
//! samples. Power-of-two lengths only.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn magnitude(&self) -> f64 {
        (self.re * self.re + self.im * self.im).sqrt()
    }

    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    fn add(self, o: Complex) -> Complex {
        Complex {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }

    fn sub(self, o: Complex) -> Complex {
        Complex {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

/// Precomputed plan for one transform size.
pub struct Fft {
    size: usize,
    // exp(-2*pi*i*k/size) for k in 0..size/2
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 || !size.is_power_of_two() {
            return Err(Error::Config(format!(
                "FFT size must be a power of two >= 2, got {size}"
            )));
        }
        let twiddles = (0..size / 2)
            .map(|k| {
                let ang = -std::f64::consts::TAU * k as f64 / size as f64;
                Complex::new(ang.cos(), ang.sin())
            })
            .collect();
        let bits = size.trailing_zeros();
        let bitrev = (0..size)
            .map(|i| (i.reverse_bits() >> (usize::BITS - bits)) & (size - 1))
            .collect();
        Ok(Fft {
            size,
            twiddles,
            bitrev,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place forward transform.
    pub fn forward(&self, buf: &mut [Complex]) -> Result<()> {
        self.transform(buf, false)
    }

    /// In-place inverse transform (includes the 1/N scale).
    pub fn inverse(&self, buf: &mut [Complex]) -> Result<()> {
        self.transform(buf, true)?;
        let scale = 1.0 / self.size as f64;
        for v in buf.iter_mut() {
            v.re *= scale;
            v.im *= scale;
        }
        Ok(())
    }

    fn transform(&self, buf: &mut [Complex], inverse: bool) -> Result<()> {
        if buf.len() != self.size {
            return Err(Error::Dimension(format!(
                "FFT plan for size {} applied to buffer of {}",
                self.size,
                buf.len()
            )));
        }
        for i in 0..self.size {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.size {
            let stride = self.size / len;
            for start in (0..self.size).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w.im = -w.im;
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + len / 2].mul(w);
                    buf[start + k] = a.add(b);
                    buf[start + k + len / 2] = a.sub(b);
                }
            }
            len <<= 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n^2) reference transform.
    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::default();
                for (j, v) in x.iter().enumerate() {
                    let ang = -std::f64::consts::TAU * (k * j) as f64 / n as f64;
                    acc = acc.add(v.mul(Complex::new(ang.cos(), ang.sin())));
                }
                acc
            })
            .collect()
    }

    fn random_signal(n: usize, seed: u64) -> Vec<Complex> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn matches_naive_dft_size_8() {
        let x = random_signal(8, 42);
        let mut y = x.clone();
        Fft::new(8).unwrap().forward(&mut y).unwrap();
        let want = naive_dft(&x);
        for (a, b) in y.iter().zip(&want) {
            let scale = b.magnitude().max(1.0);
            assert!((a.re - b.re).abs() / scale < 1e-9);
            assert!((a.im - b.im).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn matches_naive_dft_many_sizes() {
        for (i, &n) in [4usize, 16, 64, 256, 1024].iter().enumerate() {
            let x = random_signal(n, 100 + i as u64);
            let mut y = x.clone();
            Fft::new(n).unwrap().forward(&mut y).unwrap();
            let want = naive_dft(&x);
            for (a, b) in y.iter().zip(&want) {
                let scale = b.magnitude().max(1.0);
                assert!((a.re - b.re).abs() / scale < 1e-9, "size {n}");
                assert!((a.im - b.im).abs() / scale < 1e-9, "size {n}");
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        let x = random_signal(128, 7);
        let mut y = x.clone();
        let plan = Fft::new(128).unwrap();
        plan.forward(&mut y).unwrap();
        plan.inverse(&mut y).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a.re - b.re).abs() < 1e-12);
            assert!((a.im - b.im).abs() < 1e-12);
        }
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(Fft::new(12).is_err());
        assert!(Fft::new(0).is_err());
    }
}
