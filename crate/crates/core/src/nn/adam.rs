use serde::{Deserialize, Serialize};

use super::network::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &f64> {
        self.v.iter().flatten()
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<()> {
    let gs = grads.tensors();
    if gs.len() != state.m.len() || gs.iter().zip(&state.m).any(|(g, m)| g.len() != m.len()) {
        return Err(Error::Shape(
            "gradients do not match the optimizer state".into(),
        ));
    }
    if gs.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!(
            "gradient at optimizer step {}",
            state.t + 1
        )));
    }
    let mut ps = params.tensors_mut();
    if ps.len() != gs.len() || ps.iter().zip(&gs).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::Shape("gradients do not match the parameters".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in ps
        .iter_mut()
        .zip(&gs)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{init_he_uniform, Activation, NetworkParams, NetworkSpec};

    fn net() -> NetworkParams {
        init_he_uniform(&NetworkSpec::chain(&[3, 2], Activation::Linear).unwrap(), 4).unwrap()
    }

    fn filled(p: &NetworkParams, v: f64) -> NetworkParams {
        let mut g = p.clone();
        for t in g.tensors_mut() {
            t.fill(v);
        }
        g
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = net();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = filled(&p, 0.0);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn first_step_is_lr() {
        let mut p = net();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = filled(&p, 1.0);
        let h = AdamConfig::default();
        adam_step(&mut p, &g, &mut s, &h).unwrap();
        // m̂ = v̂ = 1 after bias correction, so Δ = -lr / (1 + eps).
        let expected = -h.lr / (1.0 + h.eps);
        for (a, b) in p.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = net();
        let mut s = AdamState::new(&p);
        let g = filled(&p, 0.37);
        let h = AdamConfig::default();
        let mut last = p.clone();
        for _ in 0..5000 {
            last = p.clone();
            adam_step(&mut p, &g, &mut s, &h).unwrap();
        }
        let step = last.tensors()[0][0] - p.tensors()[0][0];
        assert!((step - h.lr).abs() / h.lr < 1e-6, "step {step}");
        assert!(s.second_moments().all(|v| *v >= 0.0));
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = net();
        let mut s = AdamState::new(&p);
        let g = filled(&p, f64::NAN);
        assert!(matches!(
            adam_step(&mut p, &g, &mut s, &AdamConfig::default()),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(s.steps(), 0);
    }
}
