//! Residual vector quantization with EMA-learned codebooks.
//!
//! Stage `k` snaps the running residual to its nearest codeword (Euclidean,
//! ties to the lowest index); the decoded feature is the sum of selected
//! codewords. Gradients pass through the quantizer unchanged
//! (straight-through), which the training graph realizes by adding the
//! quantization delta as a constant.

pub mod bitstream;

pub use bitstream::CodeStream;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Consecutive updates an entry may go unused before it is re-seeded from
/// batch residuals.
const DEAD_CODE_PATIENCE: u32 = 25;

/// Smoothing floor for EMA count normalization.
const COUNT_EPS: f64 = 1e-7;

/// One quantization stage: `size x dim` codewords plus EMA statistics.
#[derive(Debug, Clone)]
pub struct Codebook {
    vectors: Tensor,
    ema_counts: Vec<f64>,
    ema_sums: Tensor,
    unused_streak: Vec<u32>,
    size: usize,
    dim: usize,
}

impl Codebook {
    fn new(size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let vectors = Tensor::randn(&[size, dim], 0.1, rng);
        Codebook {
            ema_sums: vectors.clone(),
            ema_counts: vec![1.0; size],
            unused_streak: vec![0; size],
            vectors,
            size,
            dim,
        }
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Nearest codeword to `x` by squared distance, lowest index on ties.
    fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for e in 0..self.size {
            let row = &self.vectors.data()[e * self.dim..(e + 1) * self.dim];
            let mut d = 0.0;
            for (a, b) in x.iter().zip(row) {
                let diff = a - b;
                d += diff * diff;
            }
            if d < best_d {
                best_d = d;
                best = e;
            }
        }
        best
    }
}

/// Per-stage assignment record handed to [`ResidualQuantizer::update`].
pub struct Assignments {
    /// For each stage: chosen entry per row.
    pub indices: Vec<Vec<u32>>,
    /// For each stage: the residual rows that were quantized, `[N, dim]`.
    pub residuals: Vec<Tensor>,
}

/// Result of quantizing a feature matrix.
pub struct Quantized {
    /// Frame-major, then codebook order: `indices[frame * n_stages + stage]`.
    pub indices: Vec<u32>,
    /// Sum of selected codewords, same shape as the input.
    pub restored: Tensor,
    pub assignments: Assignments,
}

/// A cascade of codebooks over a shared feature dimension.
#[derive(Debug, Clone)]
pub struct ResidualQuantizer {
    stages: Vec<Codebook>,
    dim: usize,
    decay: f64,
}

impl ResidualQuantizer {
    /// `decay` is the EMA decay (0.99 is the stable default).
    pub fn new(
        n_codebooks: usize,
        codebook_size: usize,
        dim: usize,
        decay: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_codebooks == 0 {
            return Err(Error::Config("need at least one codebook".into()));
        }
        if codebook_size < 2 {
            return Err(Error::Config("codebook size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&decay) || decay == 0.0 {
            return Err(Error::Config(format!("EMA decay {decay} not in (0, 1)")));
        }
        Ok(ResidualQuantizer {
            stages: (0..n_codebooks)
                .map(|_| Codebook::new(codebook_size, dim, rng))
                .collect(),
            dim,
            decay,
        })
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codebook_size(&self) -> usize {
        self.stages[0].size
    }

    pub fn stage(&self, k: usize) -> &Codebook {
        &self.stages[k]
    }

    /// Quantizes rows of a `[N, dim]` matrix (higher-rank tensors are
    /// treated as stacked rows over the last axis).
    pub fn quantize(&self, z: &Tensor) -> Result<Quantized> {
        let dim = *z.shape().last().ok_or_else(|| {
            Error::Dimension("cannot quantize a rank-0 tensor".into())
        })?;
        if dim != self.dim {
            return Err(Error::Dimension(format!(
                "feature dim {dim} does not match quantizer dim {}",
                self.dim
            )));
        }
        let rows = z.numel() / dim;
        let n_stages = self.stages.len();
        let mut residual: Vec<f64> = z.data().to_vec();
        let mut restored = vec![0.0; z.numel()];
        let mut indices = vec![0u32; rows * n_stages];
        let mut per_stage_idx: Vec<Vec<u32>> = Vec::with_capacity(n_stages);
        let mut per_stage_res: Vec<Tensor> = Vec::with_capacity(n_stages);
        for (k, stage) in self.stages.iter().enumerate() {
            per_stage_res.push(Tensor::new(vec![rows, dim], residual.clone())?);
            let mut stage_idx = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &mut residual[r * dim..(r + 1) * dim];
                let e = stage.nearest(row);
                stage_idx.push(e as u32);
                indices[r * n_stages + k] = e as u32;
                let code = &stage.vectors.data()[e * dim..(e + 1) * dim];
                for ((res, rest), &cv) in row
                    .iter_mut()
                    .zip(&mut restored[r * dim..(r + 1) * dim])
                    .zip(code)
                {
                    *res -= cv;
                    *rest += cv;
                }
            }
            per_stage_idx.push(stage_idx);
        }
        Ok(Quantized {
            indices,
            restored: Tensor::new(z.shape().to_vec(), restored)?,
            assignments: Assignments {
                indices: per_stage_idx,
                residuals: per_stage_res,
            },
        })
    }

    /// Decodes frame-major indices back to features: `[N, dim]`.
    pub fn decode(&self, indices: &[u32], rows: usize) -> Result<Tensor> {
        let n_stages = self.stages.len();
        if indices.len() != rows * n_stages {
            return Err(Error::Dimension(format!(
                "expected {} indices for {rows} frames x {n_stages} stages, got {}",
                rows * n_stages,
                indices.len()
            )));
        }
        let mut out = vec![0.0; rows * self.dim];
        for r in 0..rows {
            for (k, stage) in self.stages.iter().enumerate() {
                let e = indices[r * n_stages + k] as usize;
                if e >= stage.size {
                    return Err(Error::Format(format!(
                        "index {e} out of range for codebook of {}",
                        stage.size
                    )));
                }
                let code = &stage.vectors.data()[e * self.dim..(e + 1) * self.dim];
                for (o, &cv) in out[r * self.dim..(r + 1) * self.dim].iter_mut().zip(code) {
                    *o += cv;
                }
            }
        }
        Tensor::new(vec![rows, self.dim], out)
    }

    /// EMA codebook update from one batch of assignments, then dead-code
    /// refresh: entries unused for [`DEAD_CODE_PATIENCE`] consecutive
    /// updates are re-seeded from random residuals of this batch.
    pub fn update(&mut self, assignments: &Assignments, rng: &mut ChaCha20Rng) {
        for (k, stage) in self.stages.iter_mut().enumerate() {
            let idx = &assignments.indices[k];
            let res = &assignments.residuals[k];
            let rows = idx.len();
            let dim = stage.dim;
            let mut batch_counts = vec![0.0f64; stage.size];
            let mut batch_sums = vec![0.0f64; stage.size * dim];
            for (r, &e) in idx.iter().enumerate() {
                let e = e as usize;
                batch_counts[e] += 1.0;
                for (s, &v) in batch_sums[e * dim..(e + 1) * dim]
                    .iter_mut()
                    .zip(&res.data()[r * dim..(r + 1) * dim])
                {
                    *s += v;
                }
            }
            for e in 0..stage.size {
                stage.ema_counts[e] =
                    self.decay * stage.ema_counts[e] + (1.0 - self.decay) * batch_counts[e];
                for (sum, &b) in stage.ema_sums.data_mut()[e * dim..(e + 1) * dim]
                    .iter_mut()
                    .zip(&batch_sums[e * dim..(e + 1) * dim])
                {
                    *sum = self.decay * *sum + (1.0 - self.decay) * b;
                }
                let denom = stage.ema_counts[e].max(COUNT_EPS);
                for (v, &sum) in stage.vectors.data_mut()[e * dim..(e + 1) * dim]
                    .iter_mut()
                    .zip(&stage.ema_sums.data()[e * dim..(e + 1) * dim])
                {
                    *v = sum / denom;
                }
                if batch_counts[e] == 0.0 {
                    stage.unused_streak[e] += 1;
                } else {
                    stage.unused_streak[e] = 0;
                }
                if stage.unused_streak[e] >= DEAD_CODE_PATIENCE && rows > 0 {
                    let r = rng.gen_range(0..rows);
                    let seed_row = &res.data()[r * dim..(r + 1) * dim];
                    stage.vectors.data_mut()[e * dim..(e + 1) * dim].copy_from_slice(seed_row);
                    stage.ema_sums.data_mut()[e * dim..(e + 1) * dim].copy_from_slice(seed_row);
                    stage.ema_counts[e] = 1.0;
                    stage.unused_streak[e] = 0;
                }
            }
        }
    }

    /// Serializes codebooks + EMA state into named tensors under `prefix`.
    pub fn export(&self, prefix: &str, ck: &mut crate::tensor::checkpoint::Checkpoint) {
        for (k, stage) in self.stages.iter().enumerate() {
            ck.insert(format!("{prefix}.{k}.vectors"), stage.vectors.clone());
            ck.insert(format!("{prefix}.{k}.ema_sums"), stage.ema_sums.clone());
            ck.insert(
                format!("{prefix}.{k}.ema_counts"),
                Tensor::from_slice(&stage.ema_counts),
            );
            ck.insert(
                format!("{prefix}.{k}.unused"),
                Tensor::from_slice(
                    &stage
                        .unused_streak
                        .iter()
                        .map(|&v| v as f64)
                        .collect::<Vec<_>>(),
                ),
            );
        }
    }

    /// Restores state written by [`export`](Self::export).
    pub fn import(
        &mut self,
        prefix: &str,
        ck: &crate::tensor::checkpoint::Checkpoint,
    ) -> Result<()> {
        for (k, stage) in self.stages.iter_mut().enumerate() {
            let vectors = ck.tensor(&format!("{prefix}.{k}.vectors"))?;
            if vectors.shape() != stage.vectors.shape() {
                return Err(Error::Format(format!(
                    "codebook {k} shape {:?} does not match model {:?}",
                    vectors.shape(),
                    stage.vectors.shape()
                )));
            }
            stage.vectors = vectors.clone();
            stage.ema_sums = ck.tensor(&format!("{prefix}.{k}.ema_sums"))?.clone();
            stage.ema_counts = ck.tensor(&format!("{prefix}.{k}.ema_counts"))?.data().to_vec();
            stage.unused_streak = ck
                .tensor(&format!("{prefix}.{k}.unused"))?
                .data()
                .iter()
                .map(|&v| v as u32)
                .collect();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn fixed_quantizer(stage_values: &[&[f64]]) -> ResidualQuantizer {
        let dim = 1;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut q = ResidualQuantizer::new(stage_values.len(), stage_values[0].len(), dim, 0.99, &mut rng)
            .unwrap();
        for (k, vals) in stage_values.iter().enumerate() {
            q.stages[k].vectors = Tensor::new(vec![vals.len(), 1], vals.to_vec()).unwrap();
            // Keep EMA statistics consistent with the planted codewords.
            q.stages[k].ema_sums = q.stages[k].vectors.clone();
            q.stages[k].ema_counts = vec![1.0; vals.len()];
        }
        q
    }

    #[test]
    fn two_stage_scalar_example() {
        // stage 0 {-1, +1}, stage 1 {-0.25, +0.25}, input 0.7:
        // stage 0 picks +1 (residual -0.3), stage 1 picks -0.25, z' = 0.75.
        let q = fixed_quantizer(&[&[-1.0, 1.0], &[-0.25, 0.25]]);
        let out = q.quantize(&Tensor::new(vec![1, 1], vec![0.7]).unwrap()).unwrap();
        assert_eq!(out.indices, vec![1, 0]);
        assert_eq!(out.restored.data(), &[0.75]);
    }

    #[test]
    fn exact_codeword_with_zero_second_stage() {
        let q = fixed_quantizer(&[&[-1.0, 0.5], &[0.0, 0.3]]);
        let out = q.quantize(&Tensor::new(vec![1, 1], vec![0.5]).unwrap()).unwrap();
        assert_eq!(out.restored.data(), &[0.5]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let q = fixed_quantizer(&[&[-0.5, 0.5]]);
        // 0.0 is equidistant; index 0 must win.
        let out = q.quantize(&Tensor::new(vec![1, 1], vec![0.0]).unwrap()).unwrap();
        assert_eq!(out.indices, vec![0]);
    }

    #[test]
    fn matches_exhaustive_search_on_random_instances() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for trial in 0..200 {
            let dim = rng.gen_range(1..=4);
            let size = rng.gen_range(2..=16);
            let n_stages = rng.gen_range(1..=3);
            let q = ResidualQuantizer::new(n_stages, size, dim, 0.99, &mut rng).unwrap();
            let z = Tensor::randn(&[3, dim], 1.0, &mut rng);
            let got = q.quantize(&z).unwrap();
            // Brute force: replicate the greedy per-stage search directly.
            for r in 0..3 {
                let mut residual: Vec<f64> = z.data()[r * dim..(r + 1) * dim].to_vec();
                for k in 0..n_stages {
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for e in 0..size {
                        let row = &q.stages[k].vectors.data()[e * dim..(e + 1) * dim];
                        let d: f64 = residual
                            .iter()
                            .zip(row)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        if d < best_d {
                            best_d = d;
                            best = e;
                        }
                    }
                    assert_eq!(
                        got.indices[r * n_stages + k],
                        best as u32,
                        "trial {trial} row {r} stage {k}"
                    );
                    for (rv, cv) in residual.iter_mut().zip(
                        &q.stages[k].vectors.data()[best * dim..(best + 1) * dim],
                    ) {
                        *rv -= cv;
                    }
                }
            }
        }
    }

    #[test]
    fn refinement_is_monotone_with_zero_codeword() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let dim = 3;
            let mut q = ResidualQuantizer::new(3, 8, dim, 0.99, &mut rng).unwrap();
            for stage in &mut q.stages {
                // Plant the zero vector at entry 0.
                stage.vectors.data_mut()[..dim].fill(0.0);
            }
            let z = Tensor::randn(&[4, dim], 1.0, &mut rng);
            let mut prev = f64::INFINITY;
            for k in 1..=3 {
                let partial = ResidualQuantizer {
                    stages: q.stages[..k].to_vec(),
                    dim,
                    decay: 0.99,
                };
                let out = partial.quantize(&z).unwrap();
                let err: f64 = z
                    .data()
                    .iter()
                    .zip(out.restored.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert!(err <= prev + 1e-12, "stage {k}: {err} > {prev}");
                prev = err;
            }
        }
    }

    #[test]
    fn ema_fixed_point_when_residuals_equal_codeword() {
        let mut q = fixed_quantizer(&[&[0.4, -0.8]]);
        let before = q.stages[0].vectors.clone();
        let z = Tensor::new(vec![4, 1], vec![0.4; 4]).unwrap();
        let out = q.quantize(&z).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        q.update(&out.assignments, &mut rng);
        assert!((q.stages[0].vectors.data()[0] - before.data()[0]).abs() < 1e-12);
    }

    #[test]
    fn ema_converges_toward_constant_assignment() {
        let mut q = fixed_quantizer(&[&[0.0, 10.0]]);
        let target = 0.6;
        let z = Tensor::new(vec![8, 1], vec![target; 8]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut prev_dist = (q.stages[0].vectors.data()[0] - target).abs();
        for _ in 0..200 {
            let out = q.quantize(&z).unwrap();
            q.update(&out.assignments, &mut rng);
            let dist = (q.stages[0].vectors.data()[0] - target).abs();
            assert!(dist <= prev_dist + 1e-12);
            prev_dist = dist;
        }
        assert!(prev_dist < 0.05, "still {prev_dist} away");
    }

    #[test]
    fn dead_codes_refresh_after_patience() {
        let mut q = fixed_quantizer(&[&[0.0, 100.0]]);
        let z = Tensor::new(vec![4, 1], vec![0.5; 4]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..DEAD_CODE_PATIENCE {
            let out = q.quantize(&z).unwrap();
            q.update(&out.assignments, &mut rng);
        }
        // Entry 1 was never used; it must have been re-seeded near 0.5's residual space.
        let v = q.stages[0].vectors.data()[1];
        assert!(v.abs() < 10.0, "entry still at {v}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let q = ResidualQuantizer::new(2, 4, 8, 0.99, &mut rng).unwrap();
        let z = Tensor::zeros(&[3, 5]);
        assert!(matches!(q.quantize(&z), Err(Error::Dimension(_))));
    }

    #[test]
    fn export_import_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut q = ResidualQuantizer::new(2, 4, 3, 0.99, &mut rng).unwrap();
        let z = Tensor::randn(&[6, 3], 1.0, &mut rng);
        let out = q.quantize(&z).unwrap();
        q.update(&out.assignments, &mut rng);
        let mut ck = crate::tensor::checkpoint::Checkpoint::new();
        q.export("rvq", &mut ck);
        let mut q2 = ResidualQuantizer::new(2, 4, 3, 0.99, &mut rng).unwrap();
        q2.import("rvq", &ck).unwrap();
        for k in 0..2 {
            assert_eq!(q.stages[k].vectors, q2.stages[k].vectors);
            assert_eq!(q.stages[k].ema_counts, q2.stages[k].ema_counts);
        }
    }
}
