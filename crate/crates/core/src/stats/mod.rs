//! Correlation coefficients, Welch's t-test, multiple-testing control and
//! small summary helpers.

pub mod corr;
pub mod special;
pub mod summary;
pub mod ttest;

pub use corr::{average_ranks, pearson, spearman};
pub use special::{ln_gamma, regularized_beta, student_t_two_tailed};
pub use summary::{bonferroni, bonferroni_one, mean, median, sample_sd, sign_test};
pub use ttest::{welch_t_test, WelchTest};
