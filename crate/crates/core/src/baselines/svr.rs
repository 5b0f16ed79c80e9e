//! Linear ε-insensitive support vector regression trained by full-batch
//! subgradient descent on the primal objective.
//!
//! Features are standardized with training statistics before descent and
//! the solution is mapped back to raw feature units.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Initial step; `None` picks 1 / (1 + C · Σ‖x̃ᵢ‖²) in standardized units.
    pub lr: Option<f64>,
    /// Step at iteration t is lr / (1 + decay · t).
    pub decay: f64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            epochs: 1000,
            lr: None,
            decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl SvrModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.nrows() != self.weights.len() {
            return Err(Error::Shape(format!(
                "features have {} rows, model expects {}",
                x.nrows(),
                self.weights.len()
            )));
        }
        Ok(self.weights.dot(&x) + self.bias)
    }
}

/// ½‖w‖² + C Σ max(0, |yᵢ − (w·xᵢ + b)| − ε) for p × n `x`.
pub fn svr_objective(
    w: ArrayView1<'_, f64>,
    b: f64,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    c: f64,
    eps: f64,
) -> f64 {
    let pred = w.dot(&x) + b;
    let hinge: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, t)| ((t - p).abs() - eps).max(0.0))
        .sum();
    0.5 * w.dot(&w) + c * hinge
}

/// Fits one drug's response `y` (length n) on p × n features.
pub fn fit_linear_svr(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &SvrConfig,
) -> Result<SvrModel> {
    let (p, n) = x.dim();
    if y.len() != n {
        return Err(Error::Shape(
            "features and target disagree on sample count".into(),
        ));
    }
    if n == 0 {
        return Err(invalid("SVR needs at least one sample"));
    }
    if config.c <= 0.0 || config.epsilon < 0.0 || config.decay < 0.0 {
        return Err(invalid("SVR needs C > 0, epsilon >= 0 and decay >= 0"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVR input".into()));
    }
    let mean = x.mean_axis(Axis(1)).expect("n > 0");
    let sd = x
        .var_axis(Axis(1), 0.0)
        .mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let xs = (&x - &mean.view().insert_axis(Axis(1))) / sd.view().insert_axis(Axis(1));
    let sq: f64 = xs.iter().map(|v| v * v).sum();
    let lr0 = config.lr.unwrap_or(1.0 / (1.0 + config.c * sq));

    // In standardized units the raw penalty ½‖w‖² becomes ½‖v / sd‖².
    let inv_sd2 = sd.mapv(|s| 1.0 / (s * s));
    let objective = |v: &Array1<f64>, b: f64| -> f64 {
        let pred = v.dot(&xs) + b;
        let hinge: f64 = pred
            .iter()
            .zip(y)
            .map(|(q, t)| ((t - q).abs() - config.epsilon).max(0.0))
            .sum();
        0.5 * (v * v * &inv_sd2).sum() + config.c * hinge
    };

    let mut v = Array1::<f64>::zeros(p);
    let mut b = y.mean().expect("n > 0");
    let mut best = (objective(&v, b), v.clone(), b);
    for t in 0..config.epochs {
        let pred = v.dot(&xs) + b;
        let s: Array1<f64> = pred
            .iter()
            .zip(y)
            .map(|(q, target)| {
                let r = target - q;
                if r.abs() > config.epsilon {
                    r.signum()
                } else {
                    0.0
                }
            })
            .collect();
        let gv = &v * &inv_sd2 - &(xs.dot(&s) * config.c);
        let gb = -config.c * s.sum();
        let step = lr0 / (1.0 + config.decay * t as f64);
        v = v - gv * step;
        b -= step * gb;
        let obj = objective(&v, b);
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!("SVR objective at iteration {t}")));
        }
        if obj < best.0 {
            best = (obj, v.clone(), b);
        }
    }
    let (_, v, b) = best;
    let weights = &v / &sd;
    let bias = b - weights.dot(&mean);
    Ok(SvrModel { weights, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn inside_tube_stays_at_start() {
        let x = array![[1.0, 2.0, 3.0, 4.0]];
        let y = array![1.0, 1.05, 0.98, 1.01];
        let cfg = SvrConfig {
            epsilon: 0.1,
            ..SvrConfig::default()
        };
        let m = fit_linear_svr(x.view(), y.view(), &cfg).unwrap();
        assert!(m.weights[0].abs() < 1e-6);
        let start = svr_objective(
            array![0.0].view(),
            y.mean().unwrap(),
            x.view(),
            y.view(),
            1.0,
            0.1,
        );
        let end = svr_objective(m.weights.view(), m.bias, x.view(), y.view(), 1.0, 0.1);
        assert!((start - end).abs() < 1e-6);
    }

    #[test]
    fn slope_two_without_tube() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 4.0 - 5.0).collect();
        let x = Array2::from_shape_vec((1, 40), xs.clone()).unwrap();
        let y = Array1::from_iter(xs.iter().map(|v| 2.0 * v));
        let cfg = SvrConfig {
            c: 100.0,
            epsilon: 0.0,
            epochs: 3000,
            ..SvrConfig::default()
        };
        let m = fit_linear_svr(x.view(), y.view(), &cfg).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 0.1, "slope {}", m.weights[0]);
    }

    #[test]
    fn wider_tube_never_adds_violators() {
        let x = Array2::from_shape_fn((2, 60), |(r, c)| ((c * 13 + r * 7) % 17) as f64 / 4.0);
        let y = Array1::from_shape_fn(60, |c| {
            x[[0, c]] - 0.5 * x[[1, c]] + ((c * 31) % 11) as f64 / 5.0
        });
        let mut last = usize::MAX;
        for eps in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let cfg = SvrConfig {
                epsilon: eps,
                ..SvrConfig::default()
            };
            let m = fit_linear_svr(x.view(), y.view(), &cfg).unwrap();
            let pred = m.predict(x.view()).unwrap();
            let violators = pred
                .iter()
                .zip(&y)
                .filter(|(p, t)| (*t - *p).abs() > eps)
                .count();
            assert!(violators <= last, "eps {eps}: {violators} > {last}");
            last = violators;
        }
    }
}
