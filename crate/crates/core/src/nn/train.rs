use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{backward, forward, loss_mse, NetworkParams, Parameters};
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a strictly lower validation
    /// loss and return the best epoch's parameters. `None` trains for the
    /// full budget and returns the final parameters.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 200,
            patience: Some(3),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epochs actually run.
    pub stopped_epoch: usize,
    /// 1-based epoch with the lowest validation loss (0 if none ran).
    pub best_epoch: usize,
}

impl TrainRecord {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.checked_sub(1).map(|i| self.val_loss[i])
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{}\t{t}\t{v}\n", i + 1));
        }
        out
    }
}

/// A differentiable training problem over indexed training samples.
pub trait Objective: Sync {
    type Params: Parameters + Clone + Send + Sync;

    fn n_train(&self) -> usize;

    /// Mean loss over `batch` (training indices) and its gradient.
    fn batch_loss_and_grad(
        &self,
        params: &Self::Params,
        batch: &[usize],
    ) -> Result<(f64, Self::Params)>;

    fn validation_loss(&self, params: &Self::Params) -> Result<f64>;
}

/// Mini-batch Adam with per-epoch validation and optional early stopping.
///
/// The sample order is reshuffled every epoch from a stream seeded by
/// `config.seed`; the last partial batch is kept.
pub fn fit_objective<O: Objective>(
    objective: &O,
    init: O::Params,
    config: &FitConfig,
) -> Result<(O::Params, TrainRecord)> {
    if config.batch_size == 0 {
        return Err(invalid("batch_size must be at least 1"));
    }
    let n = objective.n_train();
    if n == 0 {
        return Err(invalid("no training samples"));
    }
    let mut record = TrainRecord::default();
    if config.max_epochs == 0 {
        return Ok((init, record));
    }
    let mut rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<O::Params> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, grads) = objective.batch_loss_and_grad(&params, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b}"
                )));
            }
            adam_step(&mut params, &grads, &mut state, &config.adam)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            weighted += loss * batch.len() as f64;
        }
        let val = objective.validation_loss(&params)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss at epoch {epoch}"
            )));
        }
        record.train_loss.push(weighted / n as f64);
        record.val_loss.push(val);
        record.stopped_epoch = epoch;

        if val < best_val {
            best_val = val;
            record.best_epoch = epoch;
            since_best = 0;
            if config.patience.is_some() {
                best_params = Some(params.clone());
            }
        } else {
            since_best += 1;
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    Ok((best_params.unwrap_or(params), record))
}

/// Supervised regression of `y` on `x` (both features × samples).
pub struct SupervisedTask {
    x_train: Array2<f64>,
    y_train: Array2<f64>,
    x_val: Array2<f64>,
    y_val: Array2<f64>,
}

impl SupervisedTask {
    pub fn new(
        x_train: Array2<f64>,
        y_train: Array2<f64>,
        x_val: Array2<f64>,
        y_val: Array2<f64>,
    ) -> Result<Self> {
        if x_train.ncols() != y_train.ncols() || x_val.ncols() != y_val.ncols() {
            return Err(Error::Shape(
                "inputs and targets disagree on sample count".into(),
            ));
        }
        if x_val.ncols() == 0 {
            return Err(invalid("no validation samples"));
        }
        Ok(Self {
            x_train,
            y_train,
            x_val,
            y_val,
        })
    }
}

impl Objective for SupervisedTask {
    type Params = NetworkParams;

    fn n_train(&self) -> usize {
        self.x_train.ncols()
    }

    fn batch_loss_and_grad(
        &self,
        params: &NetworkParams,
        batch: &[usize],
    ) -> Result<(f64, NetworkParams)> {
        let x = self.x_train.select(Axis(1), batch);
        let y = self.y_train.select(Axis(1), batch);
        let acts = forward(params, x.view())?;
        let loss = loss_mse(acts.output().view(), y.view())?;
        Ok((loss, backward(params, &acts, y.view())?))
    }

    fn validation_loss(&self, params: &NetworkParams) -> Result<f64> {
        let acts = forward(params, self.x_val.view())?;
        loss_mse(acts.output().view(), self.y_val.view())
    }
}

/// Trains a single dense network on (x, y) pairs.
pub fn fit(
    init: NetworkParams,
    train: (Array2<f64>, Array2<f64>),
    val: (Array2<f64>, Array2<f64>),
    config: &FitConfig,
) -> Result<(NetworkParams, TrainRecord)> {
    let task = SupervisedTask::new(train.0, train.1, val.0, val.1)?;
    fit_objective(&task, init, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{init_he_uniform, predict, Activation, NetworkSpec};
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_task(n: usize, noise: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = rng::seeded(seed);
        let a = Array2::from_shape_fn((3, 5), |(i, j)| (i as f64 - 1.0) * 0.7 + j as f64 * 0.3);
        let x = Array2::from_shape_simple_fn((5, n), || StandardNormal.sample(&mut rng));
        let e: Array2<f64> =
            Array2::from_shape_simple_fn((3, n), || StandardNormal.sample(&mut rng));
        let y = a.dot(&x) + 0.5 + e * noise;
        (x, y)
    }

    /// Training MSE of the exact affine least-squares fit.
    fn least_squares_floor(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let n = x.ncols();
        let design = DMatrix::from_fn(
            n,
            x.nrows() + 1,
            |r, c| if c == 0 { 1.0 } else { x[[c - 1, r]] },
        );
        let targets = DMatrix::from_fn(n, y.nrows(), |r, c| y[[c, r]]);
        let coef = (design.transpose() * &design)
            .cholesky()
            .unwrap()
            .solve(&(design.transpose() * &targets));
        let resid = &design * coef - targets;
        resid.iter().map(|v| v * v).sum::<f64>() / (resid.len() as f64)
    }

    fn spec() -> NetworkSpec {
        NetworkSpec::chain(&[5, 3], Activation::Linear).unwrap()
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (x, y) = linear_task(40, 0.1, 1);
        let init = init_he_uniform(&spec(), 2).unwrap();
        let cfg = FitConfig {
            max_epochs: 0,
            ..FitConfig::default()
        };
        let (p, rec) = fit(init.clone(), (x.clone(), y.clone()), (x, y), &cfg).unwrap();
        assert_eq!(p, init);
        assert_eq!(rec, TrainRecord::default());
    }

    #[test]
    fn reaches_noise_floor() {
        let (x, y) = linear_task(500, 0.1, 3);
        let (xv, yv) = linear_task(100, 0.1, 4);
        let floor = least_squares_floor(&x, &y);
        let cfg = FitConfig {
            batch_size: 32,
            max_epochs: 150,
            patience: None,
            adam: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            seed: 5,
        };
        let init = init_he_uniform(&spec(), 6).unwrap();
        let (p, rec) = fit(init, (x.clone(), y.clone()), (xv, yv), &cfg).unwrap();
        let train_mse = loss_mse(predict(&p, x.view()).unwrap().view(), y.view()).unwrap();
        assert!(
            train_mse < 1.1 * floor,
            "train {train_mse} vs floor {floor}"
        );
        assert_eq!(rec.stopped_epoch, 150);
    }

    #[test]
    fn improving_validation_runs_to_budget() {
        let (x, y) = linear_task(200, 0.0, 7);
        let (xv, yv) = linear_task(50, 0.0, 8);
        let cfg = FitConfig {
            max_epochs: 8,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            ..FitConfig::default()
        };
        let init = init_he_uniform(&spec(), 9).unwrap();
        let (_, rec) = fit(init, (x, y), (xv, yv), &cfg).unwrap();
        assert!(rec.val_loss.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(rec.stopped_epoch, 8);
        assert_eq!(rec.best_epoch, 8);
    }

    #[test]
    fn early_stopping_restores_best() {
        // Validation targets are unrelated noise so the loss stops improving.
        let (x, y) = linear_task(60, 1.0, 10);
        let (xv, _) = linear_task(30, 1.0, 11);
        let yv = Array2::from_elem((3, 30), 5.0);
        let cfg = FitConfig {
            batch_size: 8,
            max_epochs: 200,
            adam: AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            ..FitConfig::default()
        };
        let init = init_he_uniform(&spec(), 12).unwrap();
        let (p, rec) = fit(init, (x, y), (xv.clone(), yv.clone()), &cfg).unwrap();
        assert!(rec.stopped_epoch < 200);
        assert!(rec.stopped_epoch >= rec.best_epoch);
        assert_eq!(rec.stopped_epoch - rec.best_epoch, 3);
        let returned = loss_mse(predict(&p, xv.view()).unwrap().view(), yv.view()).unwrap();
        assert_eq!(returned, rec.best_val_loss().unwrap());
        assert!(rec.val_loss.iter().all(|&v| returned <= v));
    }

    #[test]
    fn deterministic() {
        let (x, y) = linear_task(100, 0.2, 13);
        let (xv, yv) = linear_task(20, 0.2, 14);
        let spec = NetworkSpec::chain(&[5, 8, 3], Activation::Linear).unwrap();
        let cfg = FitConfig {
            max_epochs: 10,
            seed: 15,
            ..FitConfig::default()
        };
        let run = || {
            fit(
                init_he_uniform(&spec, 16).unwrap(),
                (x.clone(), y.clone()),
                (xv.clone(), yv.clone()),
                &cfg,
            )
            .unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn rejects_zero_batch() {
        let (x, y) = linear_task(20, 0.2, 1);
        let cfg = FitConfig {
            batch_size: 0,
            ..FitConfig::default()
        };
        let init = init_he_uniform(&spec(), 1).unwrap();
        assert!(fit(init, (x.clone(), y.clone()), (x, y), &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let (x, y) = linear_task(20, 0.2, 1);
        let y = y * 1e300;
        let cfg = FitConfig {
            max_epochs: 3,
            ..FitConfig::default()
        };
        let init = init_he_uniform(&spec(), 1).unwrap();
        match fit(init, (x.clone(), y.clone()), (x, y), &cfg) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
