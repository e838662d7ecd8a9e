//! Watermark encoder: digits -> embeddings -> two linear layers -> one
//! frame, broadcast across time.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::Linear;
use crate::model::message::WatermarkMessage;
use crate::tensor::{Param, Session, Tensor, Var};

pub(crate) struct WatermarkEncoder {
    /// One embedding table per digit position, each `base x (d_w / m)`.
    tables: Vec<Param>,
    l1: Linear,
    l2: Linear,
    digits: usize,
    base: u8,
}

impl WatermarkEncoder {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let slot = cfg.watermark_dim / cfg.message_digits;
        let tables = (0..cfg.message_digits)
            .map(|i| {
                Param::new(
                    format!("wm.table{i}"),
                    Tensor::randn(&[cfg.message_base as usize, slot], 0.5, rng),
                )
            })
            .collect();
        WatermarkEncoder {
            tables,
            l1: Linear::new("wm.l1", cfg.watermark_dim, cfg.watermark_dim, rng),
            l2: Linear::new("wm.l2", cfg.watermark_dim, cfg.watermark_dim, rng),
            digits: cfg.message_digits,
            base: cfg.message_base,
        }
    }

    /// Single-frame watermark feature `[B, 1, d_w]`.
    pub fn encode_frame(&self, s: &Session, messages: &[WatermarkMessage]) -> Result<Var> {
        if messages.is_empty() {
            return Err(Error::Dimension("empty message batch".into()));
        }
        for m in messages {
            if m.len() != self.digits || m.base() != self.base {
                return Err(Error::Message(format!(
                    "message `{m}` ({} digits base {}) does not fit the model ({} digits base {})",
                    m.len(),
                    m.base(),
                    self.digits,
                    self.base
                )));
            }
        }
        let b = messages.len();
        let parts: Vec<Var> = (0..self.digits)
            .map(|j| {
                let ids: Vec<usize> = messages.iter().map(|m| m.digits()[j] as usize).collect();
                s.bind(&self.tables[j]).lookup(&ids)
            })
            .collect::<Result<_>>()?;
        // Two linear layers, deliberately without a nonlinearity between
        // them: the single-frame feature stays additive across digit slots,
        // so per-digit signatures superpose and extraction generalizes
        // across the whole message space.
        let cat = Var::concat_last(&parts)?; // [B, d_w]
        let h = self.l1.forward(s, &cat)?;
        let out = self.l2.forward(s, &h)?;
        let d = *out.shape().last().unwrap();
        out.reshape(&[b, 1, d])
    }

    /// Broadcast watermark feature `[B, time, d_w]` aligned with the carrier.
    pub fn encode(&self, s: &Session, messages: &[WatermarkMessage], time: usize) -> Result<Var> {
        self.encode_frame(s, messages)?.repeat_time(time)
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p: Vec<Param> = self.tables.clone();
        p.extend(self.l1.params());
        p.extend(self.l2.params());
        p
    }
}
