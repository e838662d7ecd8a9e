//! Watermark extractor: residual 2-D CNN over the log-mel map, global
//! pooling, and one classification head per digit.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::{Conv2dLayer, Linear};
use crate::tensor::{Activation, Param, Session, Var};

/// Maps log-mel values (floor around -11.5) into a unit-ish range before
/// the first convolution.
const INPUT_SCALE: f64 = 0.18;
const INPUT_SHIFT: f64 = 1.0;

struct ResidualBlock {
    a: Conv2dLayer,
    b: Conv2dLayer,
}

impl ResidualBlock {
    fn new(name: &str, channels: usize, rng: &mut impl Rng) -> Self {
        ResidualBlock {
            a: Conv2dLayer::new(&format!("{name}.a"), channels, channels, 3, (1, 1), (1, 1), rng),
            b: Conv2dLayer::new(&format!("{name}.b"), channels, channels, 3, (1, 1), (1, 1), rng),
        }
    }

    fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        let h = self.a.forward(s, &x.activate(Activation::Elu))?;
        self.b.forward(s, &h.activate(Activation::Elu))?.add(x)
    }

    fn params(&self) -> Vec<Param> {
        let mut p = self.a.params();
        p.extend(self.b.params());
        p
    }
}

pub(crate) struct WatermarkExtractor {
    stem: Conv2dLayer,
    down1: Conv2dLayer,
    res1: ResidualBlock,
    down2: Conv2dLayer,
    res2: ResidualBlock,
    heads: Vec<Linear>,
    base: usize,
}

impl WatermarkExtractor {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let c = cfg.extractor_channels;
        WatermarkExtractor {
            stem: Conv2dLayer::new("ext.stem", 1, c, 3, (1, 1), (1, 1), rng),
            down1: Conv2dLayer::new("ext.down1", c, 2 * c, 3, (2, 2), (1, 1), rng),
            res1: ResidualBlock::new("ext.res1", 2 * c, rng),
            down2: Conv2dLayer::new("ext.down2", 2 * c, 4 * c, 3, (2, 2), (1, 1), rng),
            res2: ResidualBlock::new("ext.res2", 4 * c, rng),
            heads: (0..cfg.message_digits)
                .map(|i| {
                    Linear::new(
                        &format!("ext.head{i}"),
                        4 * c,
                        cfg.message_base as usize,
                        rng,
                    )
                })
                .collect(),
            base: cfg.message_base as usize,
        }
    }

    /// Log-mel `[B, frames, mels]` -> per-digit logits, each `[B, base]`.
    pub fn logits(&self, s: &Session, mel: &Var) -> Result<Vec<Var>> {
        let shape = mel.shape();
        if shape.len() != 3 || shape[1] == 0 {
            return Err(Error::Dimension(format!(
                "extractor expects [B, frames, mels] with frames >= 1, got {shape:?}"
            )));
        }
        let (b, f, m) = (shape[0], shape[1], shape[2]);
        let x = mel
            .mul_scalar(INPUT_SCALE)
            .add_scalar(INPUT_SHIFT)
            .reshape(&[b, 1, f, m])?;
        let h = self.stem.forward(s, &x)?;
        let h = self.down1.forward(s, &h.activate(Activation::Elu))?;
        let h = self.res1.forward(s, &h)?;
        let h = self.down2.forward(s, &h.activate(Activation::Elu))?;
        let h = self.res2.forward(s, &h)?;
        let pooled = h.activate(Activation::Elu).mean_pool_hw()?; // [B, 4c]
        self.heads.iter().map(|head| head.forward(s, &pooled)).collect()
    }

    /// Per-digit probability rows, each `[B, base]` summing to 1.
    pub fn probabilities(&self, s: &Session, mel: &Var) -> Result<Vec<Var>> {
        Ok(self.logits(s, mel)?.iter().map(|l| l.softmax()).collect())
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = self.stem.params();
        p.extend(self.down1.params());
        p.extend(self.res1.params());
        p.extend(self.down2.params());
        p.extend(self.res2.params());
        for h in &self.heads {
            p.extend(h.params());
        }
        p
    }
}
