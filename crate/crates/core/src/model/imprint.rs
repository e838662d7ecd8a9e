//! Cross-attention imprint unit: fuses the watermark feature into the
//! carrier feature.
//!
//! Pre-norm residual form. Queries come from the carrier (target modality),
//! keys and values from the watermark (source modality):
//!
//! ```text
//! h' = MHCA(LN(carrier), LN(watermark)) + carrier
//! out = FFN(LN(h')) + h'
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::{LayerNormLayer, Linear};
use crate::tensor::{Activation, Param, Session, Var};

pub(crate) struct ImprintUnit {
    ln_carrier: LayerNormLayer,
    ln_watermark: LayerNormLayer,
    proj_q: Linear,
    proj_k: Linear,
    proj_v: Linear,
    proj_out: Linear,
    ln_ffn: LayerNormLayer,
    ffn1: Linear,
    ffn2: Linear,
    n_heads: usize,
}

/// Residual branch projections start small so each unit is near identity
/// and the watermark enters the carrier in the linear small-signal regime.
const RESIDUAL_BRANCH_GAIN: f64 = 0.1;

impl ImprintUnit {
    pub fn new(name: &str, cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.speech_dim;
        let hidden = 4 * d;
        ImprintUnit {
            ln_carrier: LayerNormLayer::new(&format!("{name}.ln_carrier"), d),
            ln_watermark: LayerNormLayer::new(&format!("{name}.ln_watermark"), cfg.watermark_dim),
            proj_q: Linear::new(&format!("{name}.q"), d, d, rng),
            proj_k: Linear::new(&format!("{name}.k"), cfg.watermark_dim, d, rng),
            proj_v: Linear::new(&format!("{name}.v"), cfg.watermark_dim, d, rng),
            proj_out: Linear::new_with_gain(
                &format!("{name}.out"),
                d,
                d,
                RESIDUAL_BRANCH_GAIN,
                rng,
            ),
            ln_ffn: LayerNormLayer::new(&format!("{name}.ln_ffn"), d),
            ffn1: Linear::new(&format!("{name}.ffn1"), d, hidden, rng),
            ffn2: Linear::new_with_gain(
                &format!("{name}.ffn2"),
                hidden,
                d,
                RESIDUAL_BRANCH_GAIN,
                rng,
            ),
            n_heads: cfg.n_heads,
        }
    }

    /// `carrier [B,T,D]`, `watermark [B,T,D_w]` -> `[B,T,D]`. Optionally
    /// returns the attention weights `[B*heads, T, T]` for inspection.
    pub fn forward_with_attention(
        &self,
        s: &Session,
        carrier: &Var,
        watermark: &Var,
    ) -> Result<(Var, Var)> {
        let cs = carrier.shape();
        let ws = watermark.shape();
        if cs.len() != 3 || ws.len() != 3 || cs[0] != ws[0] || cs[1] != ws[1] {
            return Err(Error::Dimension(format!(
                "imprint unit needs matching [B,T,*] inputs, got {cs:?} vs {ws:?}"
            )));
        }
        let (b, t, d) = (cs[0], cs[1], cs[2]);
        let heads = self.n_heads;
        let e = d / heads;

        let qn = self.ln_carrier.forward(s, carrier)?;
        let kn = self.ln_watermark.forward(s, watermark)?;
        let split = |x: &Var| -> Result<Var> {
            x.reshape(&[b, t, heads, e])?
                .permute0213()?
                .reshape(&[b * heads, t, e])
        };
        let q = split(&self.proj_q.forward(s, &qn)?)?;
        let k = split(&self.proj_k.forward(s, &kn)?)?;
        let v = split(&self.proj_v.forward(s, &kn)?)?;

        let scores = q
            .matmul(&k.transpose12()?)?
            .mul_scalar(1.0 / (e as f64).sqrt());
        let attn = scores.softmax();
        let ctx = attn
            .matmul(&v)?
            .reshape(&[b, heads, t, e])?
            .permute0213()?
            .reshape(&[b, t, d])?;
        let fused = self.proj_out.forward(s, &ctx)?.add(carrier)?;

        let hidden = self
            .ffn1
            .forward(s, &self.ln_ffn.forward(s, &fused)?)?
            .activate(Activation::Gelu);
        let out = self.ffn2.forward(s, &hidden)?.add(&fused)?;
        Ok((out, attn))
    }

    pub fn forward(&self, s: &Session, carrier: &Var, watermark: &Var) -> Result<Var> {
        Ok(self.forward_with_attention(s, carrier, watermark)?.0)
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = Vec::new();
        p.extend(self.ln_carrier.params());
        p.extend(self.ln_watermark.params());
        p.extend(self.proj_q.params());
        p.extend(self.proj_k.params());
        p.extend(self.proj_v.params());
        p.extend(self.proj_out.params());
        p.extend(self.ln_ffn.params());
        p.extend(self.ffn1.params());
        p.extend(self.ffn2.params());
        p
    }

    /// Zeroes the attention output projection and the final FFN linear
    /// (weights and biases), making the unit an exact identity on the
    /// carrier. Used by the residual-identity checks.
    pub fn zero_residual_path(&self) {
        for p in self.proj_out.params().iter().chain(self.ffn2.params().iter()) {
            p.update(|t| t.data_mut().fill(0.0));
        }
    }
}
