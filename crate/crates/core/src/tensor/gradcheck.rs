//! Finite-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::tensor::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Worst coordinate found by [`check_gradients`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Maximum relative error over all inputs and coordinates.
    pub max_rel_error: f64,
    /// (input index, flat coordinate) of the worst mismatch.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the reverse-mode gradient of `f` (a scalar-valued graph function)
/// against central finite differences at `inputs`.
///
/// The step is `1e-5` scaled by coordinate magnitude; errors are relative,
/// falling back to absolute for gradients below 1 in magnitude:
/// `|a - n| / max(|a|, |n|, 1)`.
pub fn check_gradients<F>(f: F, inputs: &[Tensor]) -> Result<GradCheckReport>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone(), true)).collect();
        f(&g, &vars)?.value().item()
    };

    // Analytic gradients from one reverse pass.
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = f(&g, &vars)?;
    out.backward()?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|v| {
            v.grad()
                .unwrap_or_else(|| Tensor::zeros(&v.value().shape().to_vec()))
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (ti, tensor) in inputs.iter().enumerate() {
        for ci in 0..tensor.numel() {
            let x0 = tensor.data()[ci];
            let h = 1e-5 * x0.abs().max(1.0);
            probe[ti].data_mut()[ci] = x0 + h;
            let fp = eval(&probe)?;
            probe[ti].data_mut()[ci] = x0 - h;
            let fm = eval(&probe)?;
            probe[ti].data_mut()[ci] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[ti].data()[ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, ci);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let r = check_gradients(|_, vars| Ok(vars[0].sum()), &[Tensor::from_slice(&[1.0, -2.0, 3.0])])
            .unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let inputs = [Tensor::from_slice(&[1.0, 2.0])];
        let g = Graph::new();
        let v = g.leaf(inputs[0].clone(), true);
        v.square().sum().backward().unwrap();
        assert_eq!(v.grad().unwrap().data(), &[2.0, 4.0]);

        let r = check_gradients(|_, vars| Ok(vars[0].square().sum()), &inputs).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }
}
