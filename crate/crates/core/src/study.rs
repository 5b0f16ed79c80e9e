//! Repeated-shuffle comparison of the full model against its variants and
//! the classical baselines. Every variant in one repetition sees the same
//! train / validation / test partition.

use std::fmt;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_linear_regression, fit_linear_svr, pca_fit, pca_project, SvrConfig};
use crate::data::{split_samples, DatasetBundle, GeneMatrix, SplitAssignment};
use crate::error::{invalid, Error, Result};
use crate::model::{assemble, complete_response, evaluate, train_full, DrugNetConfig, ModelLabels};
use crate::nn::{self, init_he_uniform, loss_mse, FitConfig};
use crate::pretrain::{random_encoder, EncoderParams, Modality};
use crate::rng::derive_seed;
use crate::stats::{median, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    RandomInit,
    Pca,
    MOnly,
    EOnly,
    LinearRegression,
    Svr,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::RandomInit,
        Variant::Pca,
        Variant::EOnly,
        Variant::MOnly,
        Variant::LinearRegression,
        Variant::Svr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::RandomInit => "random_init",
            Variant::Pca => "pca",
            Variant::MOnly => "m_only",
            Variant::EOnly => "e_only",
            Variant::LinearRegression => "linear_regression",
            Variant::Svr => "svr",
        }
    }

    pub fn is_network(self) -> bool {
        !matches!(self, Variant::LinearRegression | Variant::Svr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub model: DrugNetConfig,
    /// Principal components per modality for the PCA-based models.
    pub pca_k: usize,
    pub svr: SvrConfig,
    pub fractions: (f64, f64, f64),
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            model: DrugNetConfig::default(),
            pca_k: 64,
            svr: SvrConfig::default(),
            fractions: crate::data::split::DEFAULT_FRACTIONS,
        }
    }
}

/// A labeled cohort with complete response plus the pre-trained encoders.
pub struct StudyInputs<'a> {
    pub bundle: &'a DatasetBundle,
    pub m_enc: &'a EncoderParams,
    pub e_enc: &'a EncoderParams,
    pub config: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub test_mse: f64,
    /// Epochs run before stopping; `None` for closed-form models.
    pub epochs: Option<usize>,
}

fn labels(bundle: &DatasetBundle, m: bool, e: bool) -> Result<ModelLabels> {
    Ok(ModelLabels {
        drug_ids: complete_response(bundle)?.drug_ids().to_vec(),
        mutation_genes: if m {
            bundle.mutation.gene_ids().to_vec()
        } else {
            vec![]
        },
        expression_genes: if e {
            bundle.expression.gene_ids().to_vec()
        } else {
            vec![]
        },
    })
}

fn fit_config(base: &FitConfig, split_seed: u64) -> FitConfig {
    FitConfig {
        seed: derive_seed(split_seed, "study-shuffle", 0),
        ..base.clone()
    }
}

fn network_run(
    inputs: &StudyInputs<'_>,
    split: &SplitAssignment,
    m_enc: Option<&EncoderParams>,
    e_enc: Option<&EncoderParams>,
) -> Result<RunOutcome> {
    let cfg = &inputs.config.model;
    let model = assemble(
        m_enc,
        e_enc,
        &cfg.hidden,
        labels(inputs.bundle, m_enc.is_some(), e_enc.is_some())?,
        derive_seed(split.seed, "study-head", 0),
    )?;
    let run_cfg = DrugNetConfig {
        fit: fit_config(&cfg.fit, split.seed),
        ..cfg.clone()
    };
    let (trained, record) = train_full(&model, inputs.bundle, split, &run_cfg)?;
    let report = evaluate(&trained, inputs.bundle, &split.test_ids, "test", false)?;
    Ok(RunOutcome {
        test_mse: report.mse,
        epochs: Some(record.stopped_epoch),
    })
}

struct PcaFeatures {
    train: Array2<f64>,
    val: Array2<f64>,
    test: Array2<f64>,
}

/// [mutation PCs ∥ expression PCs] fitted on the training samples only,
/// each scaled to unit standard deviation over the training samples.
fn pca_features(inputs: &StudyInputs<'_>, split: &SplitAssignment) -> Result<PcaFeatures> {
    let b = inputs.bundle;
    let k = inputs.config.pca_k;
    let pm = pca_fit(&b.mutation, Modality::Mutation, k, &split.train_ids)?;
    let pe = pca_fit(&b.expression, Modality::Expression, k, &split.train_ids)?;
    let project = |ids: &[String]| -> Result<Array2<f64>> {
        let part = b.select_samples(ids)?;
        let zm = pca_project(&pm, part.mutation.values().view())?;
        let ze = pca_project(&pe, part.expression.values().view())?;
        concatenate(Axis(0), &[zm.view(), ze.view()]).map_err(|e| Error::Shape(e.to_string()))
    };
    let (mut train, mut val, mut test) = (
        project(&split.train_ids)?,
        project(&split.validation_ids)?,
        project(&split.test_ids)?,
    );
    let scales: Vec<f64> = train
        .rows()
        .into_iter()
        .map(|row| match sample_sd(&row.to_vec()) {
            Some(sd) if sd > 0.0 => 1.0 / sd,
            _ => 1.0,
        })
        .collect();
    for m in [&mut train, &mut val, &mut test] {
        for (mut row, &c) in m.rows_mut().into_iter().zip(&scales) {
            row.mapv_inplace(|v| v * c);
        }
    }
    Ok(PcaFeatures { train, val, test })
}

fn targets(inputs: &StudyInputs<'_>, ids: &[String]) -> Result<Array2<f64>> {
    Ok(complete_response(inputs.bundle)?
        .select_samples(ids)?
        .values()
        .clone())
}

fn pca_network_run(inputs: &StudyInputs<'_>, split: &SplitAssignment) -> Result<RunOutcome> {
    let f = pca_features(inputs, split)?;
    let (y, yv, yt) = (
        targets(inputs, &split.train_ids)?,
        targets(inputs, &split.validation_ids)?,
        targets(inputs, &split.test_ids)?,
    );
    let cfg = &inputs.config.model;
    let spec = crate::model::head_spec(f.train.nrows(), &cfg.hidden, y.nrows())?;
    let init = init_he_uniform(&spec, derive_seed(split.seed, "study-head", 0))?;
    let (head, record) = nn::fit(
        init,
        (f.train, y),
        (f.val, yv),
        &fit_config(&cfg.fit, split.seed),
    )?;
    let pred = nn::predict(&head, f.test.view())?;
    Ok(RunOutcome {
        test_mse: loss_mse(pred.view(), yt.view())?,
        epochs: Some(record.stopped_epoch),
    })
}

fn linear_run(inputs: &StudyInputs<'_>, split: &SplitAssignment) -> Result<RunOutcome> {
    let f = pca_features(inputs, split)?;
    let y = targets(inputs, &split.train_ids)?;
    let yt = targets(inputs, &split.test_ids)?;
    let model = fit_linear_regression(f.train.view(), y.view())?;
    let pred = model.predict(f.test.view())?;
    Ok(RunOutcome {
        test_mse: loss_mse(pred.view(), yt.view())?,
        epochs: None,
    })
}

fn svr_run(inputs: &StudyInputs<'_>, split: &SplitAssignment) -> Result<RunOutcome> {
    let f = pca_features(inputs, split)?;
    let y = targets(inputs, &split.train_ids)?;
    let yt = targets(inputs, &split.test_ids)?;
    let rows: Vec<ndarray::Array1<f64>> = (0..y.nrows())
        .into_par_iter()
        .map(|d| {
            let m = fit_linear_svr(f.train.view(), y.row(d), &inputs.config.svr)?;
            m.predict(f.test.view())
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
    let pred = concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(RunOutcome {
        test_mse: loss_mse(pred.view(), yt.view())?,
        epochs: None,
    })
}

/// Trains and tests one variant on one split.
pub fn run_variant(
    kind: Variant,
    inputs: &StudyInputs<'_>,
    split: &SplitAssignment,
) -> Result<RunOutcome> {
    match kind {
        Variant::Full => network_run(inputs, split, Some(inputs.m_enc), Some(inputs.e_enc)),
        Variant::RandomInit => {
            let dims = |e: &EncoderParams| -> Result<[usize; 4]> {
                e.network
                    .spec()
                    .dims()
                    .try_into()
                    .map_err(|_| invalid("encoders must have three layers"))
            };
            let m = random_encoder(
                dims(inputs.m_enc)?,
                Modality::Mutation,
                derive_seed(split.seed, "study-random-m", 0),
            )?;
            let e = random_encoder(
                dims(inputs.e_enc)?,
                Modality::Expression,
                derive_seed(split.seed, "study-random-e", 0),
            )?;
            network_run(inputs, split, Some(&m), Some(&e))
        }
        Variant::MOnly => network_run(inputs, split, Some(inputs.m_enc), None),
        Variant::EOnly => network_run(inputs, split, None, Some(inputs.e_enc)),
        Variant::Pca => pca_network_run(inputs, split),
        Variant::LinearRegression => linear_run(inputs, split),
        Variant::Svr => svr_run(inputs, split),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repetition: usize,
    pub split_seed: u64,
    pub variant: Variant,
    pub test_mse: Option<f64>,
    pub epochs: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub median_test_mse: Option<f64>,
    pub sd_test_mse: Option<f64>,
    pub median_epochs: Option<f64>,
    pub n_runs: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleStudy {
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<VariantSummary>,
}

fn summarize(variant: Variant, runs: &[RunRecord]) -> VariantSummary {
    let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.variant == variant).collect();
    let mses: Vec<f64> = mine.iter().filter_map(|r| r.test_mse).collect();
    let epochs: Vec<f64> = mine
        .iter()
        .filter_map(|r| r.epochs.map(|e| e as f64))
        .collect();
    VariantSummary {
        variant,
        median_test_mse: median(&mses),
        sd_test_mse: sample_sd(&mses),
        median_epochs: median(&epochs),
        n_runs: mses.len(),
        n_failed: mine.len() - mses.len(),
    }
}

/// Runs `variants` on `n` shuffles with split seeds base_seed + i.
/// Failed runs are recorded, not propagated.
pub fn repeat_experiment(
    inputs: &StudyInputs<'_>,
    n: usize,
    base_seed: u64,
    variants: &[Variant],
) -> Result<ShuffleStudy> {
    if n == 0 {
        return Err(invalid("at least one repetition is required"));
    }
    if variants.is_empty() {
        return Err(invalid("no variants requested"));
    }
    complete_response(inputs.bundle)?;
    let splits = (0..n)
        .map(|i| {
            split_samples(
                inputs.bundle.sample_ids(),
                base_seed + i as u64,
                inputs.config.fractions,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Variant)> = (0..n)
        .flat_map(|i| variants.iter().map(move |&v| (i, v)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, v)| {
            let split = &splits[i];
            let (test_mse, epochs, error) = match run_variant(v, inputs, split) {
                Ok(o) => (Some(o.test_mse), o.epochs, None),
                Err(e) => {
                    log::warn!("repetition {i}, variant {v}: {e}");
                    (None, None, Some(e.to_string()))
                }
            };
            RunRecord {
                repetition: i,
                split_seed: split.seed,
                variant: v,
                test_mse,
                epochs,
                error,
            }
        })
        .collect::<Vec<_>>();
    let summaries = variants.iter().map(|&v| summarize(v, &runs)).collect();
    Ok(ShuffleStudy { runs, summaries })
}

/// Every network variant and both classical models.
pub fn compare_all(inputs: &StudyInputs<'_>, n: usize, base_seed: u64) -> Result<ShuffleStudy> {
    repeat_experiment(inputs, n, base_seed, &Variant::ALL)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl ShuffleStudy {
    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }

    /// Test MSEs of `v` indexed by repetition.
    pub fn mse_by_repetition(&self, v: Variant) -> Vec<Option<f64>> {
        let n = self
            .runs
            .iter()
            .map(|r| r.repetition + 1)
            .max()
            .unwrap_or(0);
        let mut out = vec![None; n];
        for r in self.runs.iter().filter(|r| r.variant == v) {
            out[r.repetition] = r.test_mse;
        }
        out
    }

    /// variant, median_test_mse, sd_test_mse, median_epochs, n_runs, n_failed.
    pub fn report_tsv(&self) -> String {
        let mut out = String::from(
            "variant\tmedian_test_mse\tsd_test_mse\tmedian_epochs\tn_runs\tn_failed\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                s.variant,
                fmt_opt(s.median_test_mse),
                fmt_opt(s.sd_test_mse),
                fmt_opt(s.median_epochs),
                s.n_runs,
                s.n_failed
            ));
        }
        out
    }

    pub fn runs_tsv(&self) -> String {
        let mut out = String::from("repetition\tsplit_seed\tvariant\ttest_mse\tepochs\terror\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.repetition,
                r.split_seed,
                r.variant,
                fmt_opt(r.test_mse),
                r.epochs.map_or_else(|| "NA".to_string(), |e| e.to_string()),
                r.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ")
            ));
        }
        out
    }
}
