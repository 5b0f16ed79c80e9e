//! Comparison models: principal-component features, multivariate linear
//! regression and per-drug linear support vector regression.

pub mod linreg;
pub mod pca;
pub mod svr;

pub use linreg::{fit_linear_regression, LinearModel, RIDGE};
pub use pca::{pca_fit, pca_fit_columns, pca_project, PcaBasis};
pub use svr::{fit_linear_svr, svr_objective, SvrConfig, SvrModel};
