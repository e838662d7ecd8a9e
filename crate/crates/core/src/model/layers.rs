//! Parameterized layer wrappers over the graph primitives.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Param, Session, Tensor, Var};

pub(crate) struct Linear {
    w: Param,
    b: Param,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Linear::new_with_gain(name, d_in, d_out, 1.0, rng)
    }

    /// Xavier-uniform init scaled by `gain`; residual branch projections use
    /// a small gain so blocks start near identity.
    pub fn new_with_gain(
        name: &str,
        d_in: usize,
        d_out: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let limit = gain * (6.0 / (d_in + d_out) as f64).sqrt();
        Linear {
            w: Param::new(
                format!("{name}.w"),
                Tensor::rand_uniform(&[d_in, d_out], limit, rng),
            ),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[d_out])),
        }
    }

    /// `[.., d_in] -> [.., d_out]`
    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.matmul(&s.bind(&self.w))?.bias_last(&s.bind(&self.b))
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.b.clone()]
    }

    /// Weight parameter (bias excluded); used by tests that zero projections.
    pub fn weight(&self) -> &Param {
        &self.w
    }
}

pub(crate) struct Conv1dLayer {
    w: Param,
    b: Param,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dLayer {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let limit = (1.0 / (c_in * kernel) as f64).sqrt();
        Conv1dLayer {
            w: Param::new(
                format!("{name}.w"),
                Tensor::rand_uniform(&[c_out, c_in, kernel], limit, rng),
            ),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            padding,
        }
    }

    /// `[B, c_in, T] -> [B, c_out, T']`
    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.conv1d(&s.bind(&self.w), self.stride, self.padding)?
            .bias_channel(&s.bind(&self.b))
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.b.clone()]
    }
}

pub(crate) struct ConvTranspose1dLayer {
    w: Param,
    b: Param,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose1dLayer {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let limit = (1.0 / (c_in * kernel) as f64).sqrt();
        ConvTranspose1dLayer {
            w: Param::new(
                format!("{name}.w"),
                Tensor::rand_uniform(&[c_in, c_out, kernel], limit, rng),
            ),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            padding,
        }
    }

    /// `[B, c_in, T] -> [B, c_out, (T-1)*stride - 2*padding + K]`
    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.conv_transpose1d(&s.bind(&self.w), self.stride, self.padding)?
            .bias_channel(&s.bind(&self.b))
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.b.clone()]
    }
}

pub(crate) struct Conv2dLayer {
    w: Param,
    b: Param,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dLayer {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let limit = (1.0 / (c_in * kernel * kernel) as f64).sqrt();
        Conv2dLayer {
            w: Param::new(
                format!("{name}.w"),
                Tensor::rand_uniform(&[c_out, c_in, kernel, kernel], limit, rng),
            ),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            padding,
        }
    }

    /// `[B, c_in, H, W] -> [B, c_out, H', W']`
    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.conv2d(&s.bind(&self.w), self.stride, self.padding)?
            .bias_channel(&s.bind(&self.b))
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.b.clone()]
    }
}

pub(crate) struct LayerNormLayer {
    gain: Param,
    bias: Param,
    eps: f64,
}

impl LayerNormLayer {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNormLayer {
            gain: Param::new(format!("{name}.gain"), Tensor::full(&[dim], 1.0)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.layer_norm(&s.bind(&self.gain), &s.bind(&self.bias), self.eps)
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.gain.clone(), self.bias.clone()]
    }
}

/// Kernel/padding pair for a strided stage that changes length by exactly
/// the stride factor: `K = s + 2*ceil(s/2)`, `p = ceil(s/2)`.
pub(crate) fn stride_geometry(stride: usize) -> (usize, usize) {
    let pad = stride.div_ceil(2);
    (stride + 2 * pad, pad)
}
