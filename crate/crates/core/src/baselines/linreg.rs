//! Multivariate least squares with an intercept, all drugs jointly.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};

/// Ridge added to the normal-equation diagonal for conditioning.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// D × p.
    pub weights: Array2<f64>,
    /// Length D.
    pub intercept: Array1<f64>,
}

impl LinearModel {
    /// D × batch predictions for p × batch features.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.weights.ncols() {
            return Err(Error::Shape(format!(
                "features have {} rows, model expects {}",
                x.nrows(),
                self.weights.ncols()
            )));
        }
        Ok(self.weights.dot(&x) + self.intercept.view().insert_axis(Axis(1)))
    }
}

/// Solves min ‖Y − W X − b1ᵀ‖² + λ‖W‖² for p × n features and D × n targets.
pub fn fit_linear_regression(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<LinearModel> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(
            "features and targets disagree on sample count".into(),
        ));
    }
    if x.ncols() < 2 {
        return Err(invalid("linear regression needs at least two samples"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear regression input".into()));
    }
    let (p, n, d) = (x.nrows(), x.ncols(), y.nrows());
    let mx = x.mean_axis(Axis(1)).expect("non-empty");
    let my = y.mean_axis(Axis(1)).expect("non-empty");
    let xc = &x - &mx.view().insert_axis(Axis(1));
    let yc = &y - &my.view().insert_axis(Axis(1));
    let xm = DMatrix::from_fn(p, n, |i, j| xc[[i, j]]);
    let ym = DMatrix::from_fn(d, n, |i, j| yc[[i, j]]);
    let mut gram = &xm * xm.transpose();
    for i in 0..p {
        gram[(i, i)] += RIDGE;
    }
    // gram is symmetric, so W = (Y Xᵀ) gram⁻¹ comes from gram Wᵀ = X Yᵀ.
    let rhs = &xm * ym.transpose();
    let wt = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NonFinite("singular normal equations".into()))?,
    };
    let weights = Array2::from_shape_fn((d, p), |(i, j)| wt[(j, i)]);
    let intercept = &my - &weights.dot(&mx);
    if weights
        .iter()
        .chain(intercept.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("linear regression solution".into()));
    }
    Ok(LinearModel { weights, intercept })
}
