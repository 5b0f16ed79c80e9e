use std::collections::BTreeSet;

use super::matrix::{ExpressionMatrix, GeneMatrix, MutationMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_MEAN: f64 = 1.0;
pub const DEFAULT_MIN_SD: f64 = 0.5;

/// Per-gene mean and population standard deviation.
pub fn gene_mean_sd(m: &ExpressionMatrix) -> Vec<(f64, f64)> {
    let n = m.n_samples() as f64;
    m.values()
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// Drops genes whose reference-cohort mean is below `min_mean` or whose
/// reference standard deviation is below `min_sd`.
pub fn preprocess_expression_with(
    expr: &ExpressionMatrix,
    reference: &ExpressionMatrix,
    min_mean: f64,
    min_sd: f64,
) -> Result<ExpressionMatrix> {
    if reference.n_samples() == 0 {
        return Err(Error::Data("reference cohort has no samples".into()));
    }
    let stats = gene_mean_sd(reference);
    let keep: BTreeSet<&str> = reference
        .gene_ids()
        .iter()
        .zip(&stats)
        .filter(|(_, (mean, sd))| *mean >= min_mean && *sd >= min_sd)
        .map(|(g, _)| g.as_str())
        .collect();
    let ref_genes: BTreeSet<&str> = reference.gene_ids().iter().map(String::as_str).collect();
    if let Some(g) = expr
        .gene_ids()
        .iter()
        .find(|g| !ref_genes.contains(g.as_str()))
    {
        return Err(Error::Data(format!(
            "gene '{g}' is absent from the reference cohort; align gene spaces first"
        )));
    }
    let idx: Vec<usize> = expr
        .gene_ids()
        .iter()
        .enumerate()
        .filter(|(_, g)| keep.contains(g.as_str()))
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::Data(format!(
            "no genes pass the expression filter (mean >= {min_mean}, sd >= {min_sd})"
        )));
    }
    ExpressionMatrix::new(expr.labeled().select_rows(&idx))
}

pub fn preprocess_expression(
    expr: &ExpressionMatrix,
    reference: &ExpressionMatrix,
) -> Result<ExpressionMatrix> {
    preprocess_expression_with(expr, reference, DEFAULT_MIN_MEAN, DEFAULT_MIN_SD)
}

/// Removes genes that are unmutated in both cohorts; a gene mutated in
/// either one is kept in both.
pub fn preprocess_mutations(
    a: &MutationMatrix,
    b: &MutationMatrix,
) -> Result<(MutationMatrix, MutationMatrix)> {
    if a.gene_ids() != b.gene_ids() {
        return Err(Error::Shape(
            "mutation matrices must share one gene ordering; align them first".into(),
        ));
    }
    let ca = a.gene_counts();
    let cb = b.gene_counts();
    let idx: Vec<usize> = (0..ca.len()).filter(|&i| ca[i] + cb[i] > 0).collect();
    Ok((
        MutationMatrix::new(a.labeled().select_rows(&idx))?,
        MutationMatrix::new(b.labeled().select_rows(&idx))?,
    ))
}

/// Restricts both matrices to their shared genes, in lexicographic order.
pub fn align_genes<M: GeneMatrix>(a: &M, b: &M) -> Result<(M, M)> {
    let sa: BTreeSet<&String> = a.gene_ids().iter().collect();
    let shared: Vec<String> = b
        .gene_ids()
        .iter()
        .filter(|g| sa.contains(g))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if shared.is_empty() {
        return Err(Error::Data("matrices share no genes".into()));
    }
    Ok((
        M::from_labeled(a.labeled().select_rows_by_id(&shared)?)?,
        M::from_labeled(b.labeled().select_rows_by_id(&shared)?)?,
    ))
}
