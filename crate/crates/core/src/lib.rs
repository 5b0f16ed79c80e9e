//! Drug response prediction from paired mutation and expression profiles.
//!
//! Two autoencoders are pre-trained on a large unlabeled cohort; their
//! encoder halves feed a prediction head trained end-to-end on a labeled
//! cohort with measured log₁₀ IC₅₀. The crate also carries the comparison
//! baselines and the mutation–drug association statistics run on the
//! predictions.

pub mod assoc;
pub mod baselines;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod pretrain;
pub mod reference;
pub mod rng;
pub mod stats;
pub mod study;

pub use error::{Error, ErrorKind, Result};
