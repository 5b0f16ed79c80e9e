//! Cohort matrices: ingestion, preprocessing, imputation, splitting and
//! synthetic data generation.

pub mod impute;
pub mod io;
pub mod matrix;
pub mod preprocess;
pub mod split;
pub mod synth;

pub use impute::{impute_column_mean, impute_missing_knn};
pub use io::{
    load_drug_response, load_expression_tsv, load_imputed_response, load_metadata,
    load_mutation_maf, load_mutation_tsv, load_predictions, write_drug_response,
    write_expression_tsv, write_imputed_mask, write_maf_lite, write_metadata, write_mutation_tsv,
    write_predictions,
};
pub use matrix::{
    DatasetBundle, DrugResponseMatrix, ExpressionMatrix, GeneMatrix, LabeledMatrix, MutationMatrix,
    PredictionMatrix, SampleMetadata,
};
pub use preprocess::{
    align_genes, preprocess_expression, preprocess_expression_with, preprocess_mutations,
};
pub use split::{split_samples, SplitAssignment};
pub use synth::{synthesize_dataset, SynthConfig, SyntheticData};
