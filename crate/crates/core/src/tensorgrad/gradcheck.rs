use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    /// Worst `|a − n| / max(1e-8, |a| + |n|)` over every input element.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Analytic and numeric values at the worst relative error.
    pub worst: (f64, f64),
    pub checked: usize,
}

/// Compares reverse-mode gradients of `f` against central differences in
/// double precision. Inputs are drawn uniformly from `[-2, 2)`.
pub fn gradcheck<F>(f: F, input_shapes: &[&[usize]], seed: u64) -> Result<GradcheckReport>
where
    F: Fn(&Graph<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = input_shapes
        .iter()
        .map(|s| Tensor::uniform(s, -2.0, 2.0, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    gradcheck_inputs(f, &inputs, seed)
}

/// As [`gradcheck`] with explicit input values.
///
/// The output is reduced to a scalar through a fixed random projection so
/// that outputs with constant sums (softmax) still carry gradient.
pub fn gradcheck_inputs<F>(f: F, inputs: &[Tensor<f64>], seed: u64) -> Result<GradcheckReport>
where
    F: Fn(&Graph<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let g = Graph::new();
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&g, &vars)?;
    let proj = Tensor::uniform(out.shape(), -1.0, 1.0, &mut rng)?;
    let pv = g.constant(proj.clone());
    let loss = g.sum(&g.mul(&out, &pv)?);
    g.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| v.grad().map(|gr| gr.clone()).unwrap_or_else(|| vec![0.0; v.numel()]))
        .collect();

    let eval = |xs: &[Tensor<f64>]| -> Result<Tensor<f64>> {
        let g = Graph::inference();
        let vars: Vec<Var<f64>> = xs.iter().map(|t| g.constant(t.clone())).collect();
        Ok(f(&g, &vars)?.to_tensor())
    };

    let mut work = inputs.to_vec();
    let mut report = GradcheckReport { max_rel_error: 0.0, max_abs_error: 0.0, worst: (0.0, 0.0), checked: 0 };
    for i in 0..work.len() {
        for k in 0..work[i].numel() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + FD_STEP;
            let up = eval(&work)?;
            work[i].data_mut()[k] = orig - FD_STEP;
            let down = eval(&work)?;
            work[i].data_mut()[k] = orig;
            // Differencing each output before projecting keeps round-off
            // proportional to the outputs rather than to their weighted sum.
            let diff: f64 = up.data().iter().zip(down.data()).zip(proj.data()).map(|((u, d), p)| (u - d) * p).sum();
            let numeric = diff / (2.0 * FD_STEP);
            let a = analytic[i][k];
            let abs = (a - numeric).abs();
            let rel = abs / (a.abs() + numeric.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (a, numeric);
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}
