use std::collections::{HashMap, HashSet};

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{invalid, Error, Result};

/// A dense real matrix with unique row and column identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    values: Array2<f64>,
}

fn check_unique(ids: &[String], kind: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

impl LabeledMatrix {
    pub fn new(row_ids: Vec<String>, col_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (row_ids.len(), col_ids.len()) {
            return Err(Error::Shape(format!(
                "values are {:?} but {} row ids and {} column ids were given",
                values.dim(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        check_unique(&row_ids, "row")?;
        check_unique(&col_ids, "column")?;
        // Row-major standard layout lets callers rely on contiguous rows.
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Self {
            row_ids,
            col_ids,
            values,
        })
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.row_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn col_index(&self) -> HashMap<&str, usize> {
        self.col_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            col_ids: self.col_ids.clone(),
            values: self.values.select(Axis(0), idx),
        }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        Self {
            row_ids: self.row_ids.clone(),
            col_ids: idx.iter().map(|&i| self.col_ids[i].clone()).collect(),
            values: self.values.select(Axis(1), idx),
        }
    }

    /// Restricts rows to `ids`, in that order. Every id must be present.
    pub fn select_rows_by_id(&self, ids: &[String]) -> Result<Self> {
        let index = self.row_index();
        let idx = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("row id '{id}' not present")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_rows(&idx))
    }

    pub fn select_cols_by_id(&self, ids: &[String]) -> Result<Self> {
        let index = self.col_index();
        let idx = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("column id '{id}' not present")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_cols(&idx))
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<String>, Array2<f64>) {
        (self.row_ids, self.col_ids, self.values)
    }
}

/// Genes × samples log₂(TPM+1) expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix(LabeledMatrix);

/// Genes × samples binary nonsynonymous-mutation indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationMatrix(LabeledMatrix);

/// Shared accessors for the genes × samples matrices.
pub trait GeneMatrix: Sized {
    fn labeled(&self) -> &LabeledMatrix;
    fn from_labeled(m: LabeledMatrix) -> Result<Self>;

    fn gene_ids(&self) -> &[String] {
        self.labeled().row_ids()
    }
    fn sample_ids(&self) -> &[String] {
        self.labeled().col_ids()
    }
    fn values(&self) -> &Array2<f64> {
        self.labeled().values()
    }
    fn n_genes(&self) -> usize {
        self.labeled().n_rows()
    }
    fn n_samples(&self) -> usize {
        self.labeled().n_cols()
    }
}

impl ExpressionMatrix {
    pub fn new(m: LabeledMatrix) -> Result<Self> {
        for ((r, c), v) in m.values().indexed_iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Data(format!(
                    "expression value {v} at gene '{}', sample '{}' is not a finite non-negative number",
                    m.row_ids()[r],
                    m.col_ids()[c]
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn select_samples(&self, ids: &[String]) -> Result<Self> {
        Ok(Self(self.0.select_cols_by_id(ids)?))
    }
}

impl GeneMatrix for ExpressionMatrix {
    fn labeled(&self) -> &LabeledMatrix {
        &self.0
    }
    fn from_labeled(m: LabeledMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl MutationMatrix {
    pub fn new(m: LabeledMatrix) -> Result<Self> {
        for ((r, c), v) in m.values().indexed_iter() {
            if *v != 0.0 && *v != 1.0 {
                return Err(Error::Data(format!(
                    "mutation value {v} at gene '{}', sample '{}' is not 0 or 1",
                    m.row_ids()[r],
                    m.col_ids()[c]
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn select_samples(&self, ids: &[String]) -> Result<Self> {
        Ok(Self(self.0.select_cols_by_id(ids)?))
    }

    /// Number of mutated samples per gene.
    pub fn gene_counts(&self) -> Vec<usize> {
        self.0
            .values()
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&v| v > 0.5).count())
            .collect()
    }
}

impl GeneMatrix for MutationMatrix {
    fn labeled(&self) -> &LabeledMatrix {
        &self.0
    }
    fn from_labeled(m: LabeledMatrix) -> Result<Self> {
        Self::new(m)
    }
}

/// Drugs × samples log₁₀ IC₅₀ with a mask of observed cells.
///
/// Missing cells hold `NaN`. After imputation every cell is observed and
/// `imputed` marks the cells that were filled in.
#[derive(Debug, Clone)]
pub struct DrugResponseMatrix {
    matrix: LabeledMatrix,
    observed: Array2<bool>,
    imputed: Array2<bool>,
}

impl DrugResponseMatrix {
    /// Builds a matrix where NaN cells are treated as missing.
    pub fn from_values(m: LabeledMatrix) -> Result<Self> {
        for ((r, c), v) in m.values().indexed_iter() {
            if v.is_infinite() {
                return Err(Error::Data(format!(
                    "infinite response at drug '{}', sample '{}'",
                    m.row_ids()[r],
                    m.col_ids()[c]
                )));
            }
        }
        let observed = m.values().mapv(|v| !v.is_nan());
        let imputed = Array2::from_elem(m.values().dim(), false);
        Ok(Self {
            matrix: m,
            observed,
            imputed,
        })
    }

    pub(crate) fn with_masks(
        matrix: LabeledMatrix,
        observed: Array2<bool>,
        imputed: Array2<bool>,
    ) -> Self {
        Self {
            matrix,
            observed,
            imputed,
        }
    }

    /// Marks cells of a complete matrix as imputed, e.g. after reloading a
    /// saved imputation together with its mask.
    pub fn with_imputed_mask(self, imputed: Array2<bool>) -> Result<Self> {
        if !self.is_complete() {
            return Err(invalid("an imputed mask needs a complete response matrix"));
        }
        if imputed.dim() != self.matrix.values().dim() {
            return Err(Error::Shape(format!(
                "imputed mask is {:?}, response is {:?}",
                imputed.dim(),
                self.matrix.values().dim()
            )));
        }
        Ok(Self { imputed, ..self })
    }

    pub fn drug_ids(&self) -> &[String] {
        self.matrix.row_ids()
    }
    pub fn sample_ids(&self) -> &[String] {
        self.matrix.col_ids()
    }
    pub fn values(&self) -> &Array2<f64> {
        self.matrix.values()
    }
    pub fn labeled(&self) -> &LabeledMatrix {
        &self.matrix
    }
    pub fn observed_mask(&self) -> &Array2<bool> {
        &self.observed
    }
    pub fn imputed_mask(&self) -> &Array2<bool> {
        &self.imputed
    }
    pub fn n_drugs(&self) -> usize {
        self.matrix.n_rows()
    }
    pub fn n_samples(&self) -> usize {
        self.matrix.n_cols()
    }
    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }
    pub fn is_complete(&self) -> bool {
        self.n_missing() == 0
    }

    pub fn select_samples(&self, ids: &[String]) -> Result<Self> {
        let index = self.matrix.col_index();
        let idx =
            ids.iter()
                .map(|id| {
                    index.get(id.as_str()).copied().ok_or_else(|| {
                        Error::Data(format!("sample '{id}' not present in response"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            matrix: self.matrix.select_cols(&idx),
            observed: self.observed.select(Axis(1), &idx),
            imputed: self.imputed.select(Axis(1), &idx),
        })
    }
}

/// Drugs × samples predicted log₁₀ IC₅₀; every value finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix(LabeledMatrix);

impl PredictionMatrix {
    pub fn new(m: LabeledMatrix) -> Result<Self> {
        if let Some(((r, c), v)) = m.values().indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "prediction {v} at drug '{}', sample '{}'",
                m.row_ids()[r],
                m.col_ids()[c]
            )));
        }
        Ok(Self(m))
    }
    pub fn labeled(&self) -> &LabeledMatrix {
        &self.0
    }
    pub fn drug_ids(&self) -> &[String] {
        self.0.row_ids()
    }
    pub fn sample_ids(&self) -> &[String] {
        self.0.col_ids()
    }
    pub fn values(&self) -> &Array2<f64> {
        self.0.values()
    }
    pub fn n_drugs(&self) -> usize {
        self.0.n_rows()
    }
    pub fn n_samples(&self) -> usize {
        self.0.n_cols()
    }
    pub fn select_samples(&self, ids: &[String]) -> Result<Self> {
        Ok(Self(self.0.select_cols_by_id(ids)?))
    }
}

/// Per-sample annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMetadata {
    pub sample_id: String,
    pub cancer_type: String,
    pub extra_labels: std::collections::BTreeMap<String, String>,
}

/// All matrices describing one cohort, sharing one sample ordering.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub expression: ExpressionMatrix,
    pub mutation: MutationMatrix,
    pub response: Option<DrugResponseMatrix>,
    pub metadata: Vec<SampleMetadata>,
}

impl DatasetBundle {
    pub fn new(
        expression: ExpressionMatrix,
        mutation: MutationMatrix,
        response: Option<DrugResponseMatrix>,
        metadata: Vec<SampleMetadata>,
    ) -> Result<Self> {
        let bundle = Self {
            expression,
            mutation,
            response,
            metadata,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn sample_ids(&self) -> &[String] {
        self.expression.sample_ids()
    }

    pub fn n_samples(&self) -> usize {
        self.expression.n_samples()
    }

    pub fn validate(&self) -> Result<()> {
        let ids = self.expression.sample_ids();
        if self.mutation.sample_ids() != ids {
            return Err(invalid("mutation and expression sample orderings differ"));
        }
        if let Some(r) = &self.response {
            if r.sample_ids() != ids {
                return Err(invalid("response and expression sample orderings differ"));
            }
        }
        if self.metadata.len() != ids.len()
            || self
                .metadata
                .iter()
                .zip(ids)
                .any(|(m, id)| &m.sample_id != id)
        {
            return Err(invalid(
                "metadata sample ordering differs from the matrices",
            ));
        }
        if let Some(m) = self.metadata.iter().find(|m| m.cancer_type.is_empty()) {
            return Err(invalid(format!(
                "sample '{}' has an empty cancer type",
                m.sample_id
            )));
        }
        Ok(())
    }

    /// Reorders or subsets every component to `ids`.
    pub fn select_samples(&self, ids: &[String]) -> Result<Self> {
        let meta_index: HashMap<&str, &SampleMetadata> = self
            .metadata
            .iter()
            .map(|m| (m.sample_id.as_str(), m))
            .collect();
        let metadata = ids
            .iter()
            .map(|id| {
                meta_index
                    .get(id.as_str())
                    .map(|m| (*m).clone())
                    .ok_or_else(|| Error::Data(format!("sample '{id}' has no metadata")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.expression.select_samples(ids)?,
            self.mutation.select_samples(ids)?,
            self.response
                .as_ref()
                .map(|r| r.select_samples(ids))
                .transpose()?,
            metadata,
        )
    }
}
