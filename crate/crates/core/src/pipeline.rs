//! Joint preprocessing of the unlabeled and labeled cohorts into one
//! shared gene space per modality.

use serde::{Deserialize, Serialize};

use crate::data::preprocess::{DEFAULT_MIN_MEAN, DEFAULT_MIN_SD};
use crate::data::{
    align_genes, impute_missing_knn, preprocess_expression_with, preprocess_mutations,
    DatasetBundle, GeneMatrix,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub min_mean: f64,
    pub min_sd: f64,
    /// Neighbours for response imputation.
    pub knn_k: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_mean: DEFAULT_MIN_MEAN,
            min_sd: DEFAULT_MIN_SD,
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub expression_genes_in: (usize, usize),
    pub expression_genes_shared: usize,
    pub expression_genes_kept: usize,
    pub mutation_genes_in: (usize, usize),
    pub mutation_genes_shared: usize,
    pub mutation_genes_kept: usize,
    pub response_cells_imputed: usize,
}

/// Aligns genes across cohorts, filters expression on the unlabeled
/// cohort's statistics, drops genes unmutated in both cohorts and imputes
/// the labeled response.
pub fn preprocess_cohorts(
    unlabeled: &DatasetBundle,
    labeled: &DatasetBundle,
    config: &PreprocessConfig,
) -> Result<(DatasetBundle, DatasetBundle, PreprocessSummary)> {
    let (e_u, e_l) = align_genes(&unlabeled.expression, &labeled.expression)?;
    let shared_e = e_u.n_genes();
    let e_u2 = preprocess_expression_with(&e_u, &e_u, config.min_mean, config.min_sd)?;
    let e_l2 = preprocess_expression_with(&e_l, &e_u, config.min_mean, config.min_sd)?;

    let (m_u, m_l) = align_genes(&unlabeled.mutation, &labeled.mutation)?;
    let shared_m = m_u.n_genes();
    let (m_u2, m_l2) = preprocess_mutations(&m_u, &m_l)?;

    let (response, imputed) = match &labeled.response {
        Some(r) => {
            let n = r.n_missing();
            (Some(impute_missing_knn(r, config.knn_k)?), n)
        }
        None => (None, 0),
    };
    let summary = PreprocessSummary {
        expression_genes_in: (unlabeled.expression.n_genes(), labeled.expression.n_genes()),
        expression_genes_shared: shared_e,
        expression_genes_kept: e_u2.n_genes(),
        mutation_genes_in: (unlabeled.mutation.n_genes(), labeled.mutation.n_genes()),
        mutation_genes_shared: shared_m,
        mutation_genes_kept: m_u2.n_genes(),
        response_cells_imputed: imputed,
    };
    Ok((
        DatasetBundle::new(
            e_u2,
            m_u2,
            unlabeled.response.clone(),
            unlabeled.metadata.clone(),
        )?,
        DatasetBundle::new(e_l2, m_l2, response, labeled.metadata.clone())?,
        summary,
    ))
}
