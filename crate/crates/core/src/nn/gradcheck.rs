//! Central finite-difference verification of analytic gradients.

use ndarray::ArrayView2;

use super::network::{
    backward, forward, loss_mse, Activation, Activations, NetworkParams, Parameters,
};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose ±h perturbation moved a relu across its kink, where a
    /// finite difference does not estimate the derivative.
    pub skipped_at_kinks: usize,
}

/// Denominator floor for the relative error, so entries whose true
/// gradient is ~0 are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

fn relu_pattern(params: &NetworkParams, acts: &Activations) -> Vec<bool> {
    params
        .spec()
        .layers
        .iter()
        .zip(&acts.outputs[1..])
        .filter(|(s, _)| s.activation == Activation::Relu)
        .flat_map(|(_, a)| a.iter().map(|&v| v > 0.0))
        .collect()
}

fn loss_and_pattern(
    params: &NetworkParams,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<(f64, Vec<bool>)> {
    let acts = forward(params, x)?;
    Ok((
        loss_mse(acts.output().view(), y)?,
        relu_pattern(params, &acts),
    ))
}

/// Compares `backward` against central differences of `loss_mse` for every
/// weight and bias.
pub fn check_gradients(
    params: &NetworkParams,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    h: f64,
) -> Result<GradCheckReport> {
    let acts = forward(params, x)?;
    let analytic = backward(params, &acts, y)?;
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    for (ti, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = probe.tensors()[ti][j];
            probe.tensors_mut()[ti][j] = orig + h;
            let (plus, pat_plus) = loss_and_pattern(&probe, x, y)?;
            probe.tensors_mut()[ti][j] = orig - h;
            let (minus, pat_minus) = loss_and_pattern(&probe, x, y)?;
            probe.tensors_mut()[ti][j] = orig;
            if pat_plus != pat_minus {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{init_he_uniform, NetworkSpec};
    use crate::rng;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn small_network_passes() {
        let spec = NetworkSpec::chain(&[4, 6, 5, 3], Activation::Linear).unwrap();
        let p = init_he_uniform(&spec, 1).unwrap();
        let mut r = rng::seeded(2);
        let x = Array2::from_shape_simple_fn((4, 5), || StandardNormal.sample(&mut r));
        let y = Array2::from_shape_simple_fn((3, 5), || StandardNormal.sample(&mut r));
        let rep = check_gradients(&p, x.view(), y.view(), 1e-5).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
        assert!(rep.checked > 0);
    }
}
