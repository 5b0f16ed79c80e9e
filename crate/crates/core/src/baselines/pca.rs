//! Principal components from a thin SVD of gene-centered training data.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::GeneMatrix;
use crate::error::{invalid, Error, Result};
use crate::pretrain::Modality;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub modality: Modality,
    /// k × genes, orthonormal rows.
    pub components: Array2<f64>,
    /// Per-gene training means.
    pub means: Array1<f64>,
    /// Variance along each component (divisor n − 1), descending.
    pub explained_variance: Array1<f64>,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }
}

/// Fits on the columns `train` of a genes × samples array.
pub fn pca_fit_columns(
    data: ArrayView2<'_, f64>,
    k: usize,
    train: &[usize],
    modality: Modality,
) -> Result<PcaBasis> {
    let (g, n) = (data.nrows(), train.len());
    if k == 0 {
        return Err(invalid("PCA needs k >= 1"));
    }
    if n < 2 {
        return Err(invalid("PCA needs at least two training samples"));
    }
    let x = data.select(Axis(1), train);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let means = x.mean_axis(Axis(1)).expect("non-empty");
    let centered = &x - &means.view().insert_axis(Axis(1));
    let m = DMatrix::from_fn(g, n, |i, j| centered[[i, j]]);
    let svd = m.svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let smax = order.first().map_or(0.0, |&i| sv[i]);
    let tol = smax * (g.max(n) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&i| sv[i] > tol).count();
    if k > rank {
        return Err(invalid(format!(
            "PCA with k = {k} exceeds the attained rank {rank}"
        )));
    }
    let mut components = Array2::zeros((k, g));
    let mut explained = Array1::zeros(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let col = u.column(i);
        let mut lead = 0;
        for r in 1..g {
            if col[r].abs() > col[lead].abs() {
                lead = r;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..g {
            components[[c, r]] = sign * col[r];
        }
        explained[c] = sv[i] * sv[i] / (n - 1) as f64;
    }
    Ok(PcaBasis {
        modality,
        components,
        means,
        explained_variance: explained,
    })
}

/// Fits on the samples named in `train_ids` only.
pub fn pca_fit<M: GeneMatrix>(
    m: &M,
    modality: Modality,
    k: usize,
    train_ids: &[String],
) -> Result<PcaBasis> {
    let index = m.labeled().col_index();
    let cols = train_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("sample '{id}' not in the matrix")))
        })
        .collect::<Result<Vec<_>>>()?;
    pca_fit_columns(m.values().view(), k, &cols, modality)
}

/// components · (x − means), for genes × batch `x`.
pub fn pca_project(basis: &PcaBasis, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() != basis.means.len() {
        return Err(Error::Shape(format!(
            "input has {} genes, basis expects {}",
            x.nrows(),
            basis.means.len()
        )));
    }
    let centered = &x - &basis.means.view().insert_axis(Axis(1));
    Ok(basis.components.dot(&centered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(shape: (usize, usize), seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_simple_fn(shape, || StandardNormal.sample(&mut r))
    }

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn diagonal_points() {
        let x = ndarray::array![[1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]];
        let b = pca_fit_columns(x.view(), 1, &all(4), Modality::Expression).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.components[[0, 0]] - h).abs() < 1e-12);
        assert!((b.components[[0, 1]] - h).abs() < 1e-12);
        assert!(pca_fit_columns(x.view(), 2, &all(4), Modality::Expression).is_err());
    }

    #[test]
    fn exact_rank_reconstructs() {
        let x = randn((12, 3), 1).dot(&randn((3, 30), 2));
        let b = pca_fit_columns(x.view(), 3, &all(30), Modality::Mutation).unwrap();
        let z = pca_project(&b, x.view()).unwrap();
        let back = b.components.t().dot(&z) + b.means.view().insert_axis(Axis(1));
        assert!((&back - &x).iter().all(|v| v.abs() < 1e-8));
        let err = pca_fit_columns(x.view(), 4, &all(30), Modality::Mutation).unwrap_err();
        assert!(err.to_string().contains("rank 3"), "{err}");
    }

    #[test]
    fn orthonormal_and_mean_maps_to_zero() {
        let x = randn((20, 50), 3);
        let b = pca_fit_columns(x.view(), 10, &all(50), Modality::Expression).unwrap();
        let gram = b.components.dot(&b.components.t());
        for i in 0..10 {
            for j in 0..10 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-8);
            }
        }
        let z = pca_project(&b, b.means.view().insert_axis(Axis(1))).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        assert!(b
            .explained_variance
            .windows(2)
            .into_iter()
            .all(|w| w[0] >= w[1]));
        for c in b.components.rows() {
            let lead = c
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn ignores_non_training_samples() {
        let mut x = randn((8, 20), 4);
        let train: Vec<usize> = (0..15).collect();
        let a = pca_fit_columns(x.view(), 3, &train, Modality::Expression).unwrap();
        x.column_mut(17).fill(1e6);
        let b = pca_fit_columns(x.view(), 3, &train, Modality::Expression).unwrap();
        assert_eq!(a, b);
    }
}
