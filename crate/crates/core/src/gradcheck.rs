//! Central finite-difference gradient checking on the `f64` replica of
//! the engine.

use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Norm-wise relative error per input.
    pub rel_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>();
    let diff = libm::sqrt(diff);
    let na = libm::sqrt(analytic.iter().map(|a| a * a).sum::<f64>());
    let nn = libm::sqrt(numeric.iter().map(|a| a * a).sum::<f64>());
    let scale = na.max(nn);
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}

/// Compare analytic gradients of the scalar produced by `f` against
/// central differences, for every tensor in `inputs`.
pub fn check<F>(inputs: &[Tensor<f64>], f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(|t| t.data().to_vec()).unwrap_or_default())
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = Vec::with_capacity(input.numel());
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - STEP;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * STEP));
        }
        rel_errors.push(rel_error(&analytic[i], &numeric));
    }
    Ok(GradCheck { rel_errors })
}
