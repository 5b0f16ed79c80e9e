use ndarray::Array2;

use super::matrix::{DrugResponseMatrix, LabeledMatrix};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_K: usize = 5;
const WEIGHT_EPS: f64 = 1e-8;

/// Root-mean-squared difference over samples observed in both rows, or
/// `None` when the rows share no observed sample.
fn co_observed_rms(
    values: &Array2<f64>,
    observed: &Array2<bool>,
    a: usize,
    b: usize,
) -> Option<f64> {
    let mut ss = 0.0;
    let mut n = 0usize;
    for s in 0..values.ncols() {
        if observed[[a, s]] && observed[[b, s]] {
            ss += (values[[a, s]] - values[[b, s]]).powi(2);
            n += 1;
        }
    }
    (n > 0).then(|| (ss / n as f64).sqrt())
}

/// Fills every missing cell with the inverse-distance-weighted mean of the
/// `k` nearest drugs observed at that sample.
///
/// Distances between drugs are RMS differences over co-observed samples and
/// weights are `1 / (dist + 1e-8)`. When fewer than `k` neighbours are
/// observed at the sample all of them are used; with none, the drug's own
/// observed mean is used. Observed cells are copied unchanged.
pub fn impute_missing_knn(dr: &DrugResponseMatrix, k: usize) -> Result<DrugResponseMatrix> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let n_drugs = dr.n_drugs();
    if n_drugs < k + 1 {
        return Err(invalid(format!(
            "kNN imputation with k={k} needs at least {} drugs",
            k + 1
        )));
    }
    let values = dr.values();
    let observed = dr.observed_mask();
    for (d, row) in observed.rows().into_iter().enumerate() {
        if !row.iter().any(|&o| o) {
            return Err(Error::Data(format!(
                "drug '{}' has no observed responses",
                dr.drug_ids()[d]
            )));
        }
    }
    if dr.is_complete() {
        return Ok(dr.clone());
    }

    let mut dist = vec![None; n_drugs * n_drugs];
    let mut out = values.clone();
    let mut imputed = dr.imputed_mask().clone();
    for d in 0..n_drugs {
        let missing: Vec<usize> = (0..dr.n_samples()).filter(|&s| !observed[[d, s]]).collect();
        if missing.is_empty() {
            continue;
        }
        for other in 0..n_drugs {
            if other != d && dist[d * n_drugs + other].is_none() {
                let v = co_observed_rms(values, observed, d, other);
                dist[d * n_drugs + other] = Some(v);
                dist[other * n_drugs + d] = Some(v);
            }
        }
        let own_mean = {
            let (sum, n) = (0..dr.n_samples())
                .filter(|&s| observed[[d, s]])
                .fold((0.0, 0usize), |(acc, n), s| (acc + values[[d, s]], n + 1));
            sum / n as f64
        };
        for s in missing {
            let mut candidates: Vec<(f64, usize)> = (0..n_drugs)
                .filter(|&o| o != d && observed[[o, s]])
                .filter_map(|o| dist[d * n_drugs + o].flatten().map(|dd| (dd, o)))
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            candidates.truncate(k);
            out[[d, s]] = if candidates.is_empty() {
                own_mean
            } else {
                let (num, den) = candidates.iter().fold((0.0, 0.0), |(num, den), &(dd, o)| {
                    let w = 1.0 / (dd + WEIGHT_EPS);
                    (num + w * values[[o, s]], den + w)
                });
                num / den
            };
            imputed[[d, s]] = true;
        }
    }
    let matrix = LabeledMatrix::new(dr.drug_ids().to_vec(), dr.sample_ids().to_vec(), out)?;
    Ok(DrugResponseMatrix::with_masks(
        matrix,
        Array2::from_elem(values.dim(), true),
        imputed,
    ))
}

/// Baseline that fills each missing cell with the mean of the observed
/// cells in its column (sample).
pub fn impute_column_mean(dr: &DrugResponseMatrix) -> Result<DrugResponseMatrix> {
    let values = dr.values();
    let observed = dr.observed_mask();
    let mut out = values.clone();
    let mut imputed = dr.imputed_mask().clone();
    for s in 0..dr.n_samples() {
        let (sum, n) = (0..dr.n_drugs())
            .filter(|&d| observed[[d, s]])
            .fold((0.0, 0usize), |(acc, n), d| (acc + values[[d, s]], n + 1));
        if n == 0 {
            return Err(Error::Data(format!(
                "sample '{}' has no observed responses",
                dr.sample_ids()[s]
            )));
        }
        for d in 0..dr.n_drugs() {
            if !observed[[d, s]] {
                out[[d, s]] = sum / n as f64;
                imputed[[d, s]] = true;
            }
        }
    }
    let matrix = LabeledMatrix::new(dr.drug_ids().to_vec(), dr.sample_ids().to_vec(), out)?;
    Ok(DrugResponseMatrix::with_masks(
        matrix,
        Array2::from_elem(values.dim(), true),
        imputed,
    ))
}
