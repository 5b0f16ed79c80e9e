//! Desk-scale synthetic cohorts drawn from one shared latent model.
//!
//! Each sample carries a latent factor vector `z`. Expression is a noisy
//! linear readout of `z`, most mutation genes are Bernoulli with a
//! `z`-dependent logit, and drug response is a nonlinear function of `z`
//! plus additive effects of a few independent "driver" and planted genes.
//! The unlabeled and labeled cohorts share every model parameter, so
//! representations learned on one transfer to the other.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::io::{MafRecord, NONSYNONYMOUS_CLASSES};
use super::matrix::{
    DatasetBundle, DrugResponseMatrix, ExpressionMatrix, GeneMatrix, LabeledMatrix, MutationMatrix,
    SampleMetadata,
};
use crate::error::{invalid, Result};
use crate::rng::{self, derive_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    /// Index into the mutation genes.
    pub gene: usize,
    /// Index into the drugs.
    pub drug: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_expression_genes: usize,
    /// Extra near-zero expression genes that the variance filter should drop.
    pub n_uninformative_genes: usize,
    pub n_mutation_genes: usize,
    pub n_drugs: usize,
    pub n_pretrain: usize,
    pub n_labeled: usize,
    pub latent_dim: usize,
    pub cancer_types: Vec<String>,
    pub cancer_shift: f64,
    pub expression_scale: f64,
    pub expression_noise: f64,
    pub mutation_coupling: f64,
    pub mutation_rate_range: (f64, f64),
    pub n_driver_genes: usize,
    pub driver_rate_range: (f64, f64),
    pub driver_effect: f64,
    /// Weight of the linear latent term in the response.
    pub response_linear: f64,
    /// Weight of the tanh latent term in the response.
    pub response_nonlinear: f64,
    pub planted: Vec<PlantedEffect>,
    pub planted_rate: f64,
    pub response_noise: f64,
    pub missing_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_expression_genes: 300,
            n_uninformative_genes: 20,
            n_mutation_genes: 200,
            n_drugs: 20,
            n_pretrain: 2000,
            n_labeled: 300,
            latent_dim: 8,
            cancer_types: ["BRCA", "LUAD", "LGG"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            cancer_shift: 0.5,
            expression_scale: 1.5,
            expression_noise: 1.5,
            mutation_coupling: 1.5,
            mutation_rate_range: (0.02, 0.25),
            n_driver_genes: 8,
            driver_rate_range: (0.15, 0.35),
            driver_effect: 0.8,
            response_linear: 1.0,
            response_nonlinear: 1.5,
            planted: vec![PlantedEffect {
                gene: 8,
                drug: 0,
                delta: 1.0,
            }],
            planted_rate: 0.3,
            response_noise: 0.3,
            missing_fraction: 0.05,
        }
    }
}

impl SynthConfig {
    /// Default sizes with a purely tanh latent response, out of reach of
    /// linear baselines, and low expression noise so the latent factors
    /// are recoverable from the labeled cohort.
    pub fn nonlinear() -> Self {
        Self {
            expression_noise: 0.3,
            response_linear: 0.0,
            response_nonlinear: 3.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let smallest = self
            .n_expression_genes
            .min(self.n_mutation_genes)
            .min(self.n_pretrain)
            .min(self.n_labeled);
        if self.latent_dim == 0 || self.latent_dim >= smallest {
            return Err(invalid(format!(
                "latent dimension {} must be in [1, {smallest})",
                self.latent_dim
            )));
        }
        if self.n_drugs == 0 || self.cancer_types.is_empty() {
            return Err(invalid("need at least one drug and one cancer type"));
        }
        if self.cancer_types.iter().any(String::is_empty) {
            return Err(invalid("cancer type names must be non-empty"));
        }
        if self.n_driver_genes > self.n_mutation_genes {
            return Err(invalid("more driver genes than mutation genes"));
        }
        for p in &self.planted {
            if p.gene >= self.n_mutation_genes || p.drug >= self.n_drugs {
                return Err(invalid(format!("planted effect {p:?} is out of range")));
            }
        }
        let rate_ok = |(lo, hi): (f64, f64)| 0.0 < lo && lo <= hi && hi < 1.0;
        if !rate_ok(self.mutation_rate_range) || !rate_ok(self.driver_rate_range) {
            return Err(invalid("mutation rate ranges must lie inside (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.planted_rate) || !(0.0..1.0).contains(&self.missing_fraction)
        {
            return Err(invalid(
                "planted_rate and missing_fraction must lie in [0, 1)",
            ));
        }
        Ok(())
    }
}

/// Named record of one planted association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTriple {
    pub gene: String,
    pub drug: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub planted: Vec<PlantedTriple>,
    pub driver_genes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GeneKind {
    Coupled,
    Independent,
}

/// Parameters of the generator, shared by both cohorts.
#[derive(Debug, Clone)]
pub struct LatentModel {
    config: SynthConfig,
    expr_base: Array1<f64>,
    expr_loadings: Array2<f64>,
    mut_kind: Vec<GeneKind>,
    mut_logit: Array1<f64>,
    mut_coupling: Array2<f64>,
    cancer_shift: Array2<f64>,
    resp_offset: Array1<f64>,
    resp_linear: Array2<f64>,
    hidden_weight: Array2<f64>,
    hidden_bias: Array1<f64>,
    resp_hidden: Array2<f64>,
    driver_effects: Array2<f64>,
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * normal(rng))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LatentModel {
    fn new(config: &SynthConfig, rng: &mut Rng) -> Self {
        let l = config.latent_dim;
        let lf = l as f64;
        let ge = config.n_expression_genes;
        let gm = config.n_mutation_genes;
        let d = config.n_drugs;
        let h = 2 * l;

        let expr_base = Array1::from_shape_simple_fn(ge, || rng.random_range(3.0..7.0));
        let expr_loadings = normal_matrix(rng, ge, l, config.expression_scale / lf.sqrt());

        let mut mut_kind = vec![GeneKind::Coupled; gm];
        for k in mut_kind.iter_mut().take(config.n_driver_genes) {
            *k = GeneKind::Independent;
        }
        for p in &config.planted {
            mut_kind[p.gene] = GeneKind::Independent;
        }
        let (lo, hi) = config.mutation_rate_range;
        let (dlo, dhi) = config.driver_rate_range;
        let mut_logit = Array1::from_iter((0..gm).map(|g| {
            let rate = if g < config.n_driver_genes {
                rng.random_range(dlo..=dhi)
            } else {
                rng.random_range(lo..=hi)
            };
            logit(rate)
        }));
        let mut_coupling = normal_matrix(rng, gm, l, config.mutation_coupling / lf.sqrt());
        let cancer_shift = normal_matrix(rng, config.cancer_types.len(), l, config.cancer_shift);

        let resp_offset = Array1::from_shape_simple_fn(d, || normal(rng));
        let resp_linear = normal_matrix(rng, d, l, config.response_linear / lf.sqrt());
        let hidden_weight = normal_matrix(rng, h, l, 2.0 / lf.sqrt());
        let hidden_bias = Array1::from_shape_simple_fn(h, || 0.5 * normal(rng));
        let resp_hidden = normal_matrix(
            rng,
            d,
            h,
            config.response_nonlinear * 2.0 / (h as f64).sqrt(),
        );
        let driver_effects = normal_matrix(rng, d, config.n_driver_genes, config.driver_effect);

        Self {
            config: config.clone(),
            expr_base,
            expr_loadings,
            mut_kind,
            mut_logit,
            mut_coupling,
            cancer_shift,
            resp_offset,
            resp_linear,
            hidden_weight,
            hidden_bias,
            resp_hidden,
            driver_effects,
        }
    }

    /// Noise-free response of every drug for latent `z` and binary
    /// `mutations` (indexed like the mutation genes).
    pub fn response_mean(
        &self,
        z: ArrayView1<'_, f64>,
        mutations: ArrayView1<'_, f64>,
    ) -> Array1<f64> {
        let hidden = (self.hidden_weight.dot(&z) + &self.hidden_bias).mapv(f64::tanh);
        let mut r = &self.resp_offset + &self.resp_linear.dot(&z) + &self.resp_hidden.dot(&hidden);
        let drivers = mutations.slice(ndarray::s![..self.config.n_driver_genes]);
        r += &self.driver_effects.dot(&drivers);
        for p in &self.config.planted {
            r[p.drug] += p.delta * mutations[p.gene];
        }
        r
    }

    /// Probability that mutation gene `g` is mutated given `z`.
    pub fn mutation_probability(&self, g: usize, z: ArrayView1<'_, f64>) -> f64 {
        match self.mut_kind[g] {
            GeneKind::Independent if self.config.planted.iter().any(|p| p.gene == g) => {
                self.config.planted_rate
            }
            GeneKind::Independent => sigmoid(self.mut_logit[g]),
            GeneKind::Coupled => sigmoid(self.mut_logit[g] + self.mut_coupling.row(g).dot(&z)),
        }
    }
}

/// Samples of one cohort together with their latent factors.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub bundle: DatasetBundle,
    /// Latent factors, latent_dim × samples.
    pub latent: Array2<f64>,
    /// Noise-free, unmasked response (labeled cohort only).
    pub response_mean: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub pretrain: SyntheticCohort,
    pub labeled: SyntheticCohort,
    pub truth: GroundTruth,
    pub model: LatentModel,
}

pub fn gene_name(i: usize) -> String {
    format!("G{:05}", i + 1)
}

pub fn drug_name(i: usize) -> String {
    format!("DRUG{:03}", i + 1)
}

fn sample_cohort(
    model: &LatentModel,
    n: usize,
    prefix: &str,
    with_response: bool,
    rng: &mut Rng,
) -> Result<SyntheticCohort> {
    let c = &model.config;
    let l = c.latent_dim;
    let ge = c.n_expression_genes;
    let gu = c.n_uninformative_genes;
    let gm = c.n_mutation_genes;
    let d = c.n_drugs;

    let sample_ids: Vec<String> = (0..n).map(|i| format!("{prefix}{:05}", i + 1)).collect();
    let mut latent = Array2::zeros((l, n));
    let mut expr = Array2::zeros((ge + gu, n));
    let mut muts = Array2::zeros((gm, n));
    let mut metadata = Vec::with_capacity(n);
    for s in 0..n {
        let cancer = rng.random_range(0..c.cancer_types.len());
        for k in 0..l {
            latent[[k, s]] = model.cancer_shift[[cancer, k]] + normal(rng);
        }
        let z = latent.column(s);
        for g in 0..ge {
            let v = model.expr_base[g]
                + model.expr_loadings.row(g).dot(&z)
                + c.expression_noise * normal(rng);
            expr[[g, s]] = v.max(0.0);
        }
        for g in ge..ge + gu {
            expr[[g, s]] = (0.3 + 0.1 * normal(rng)).max(0.0);
        }
        for g in 0..gm {
            let p = model.mutation_probability(g, z);
            muts[[g, s]] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
        metadata.push(SampleMetadata {
            sample_id: sample_ids[s].clone(),
            cancer_type: c.cancer_types[cancer].clone(),
            extra_labels: BTreeMap::new(),
        });
    }

    let (response, response_mean) = if with_response {
        let mut mean = Array2::zeros((d, n));
        for s in 0..n {
            mean.column_mut(s)
                .assign(&model.response_mean(latent.column(s), muts.column(s)));
        }
        let mut values = mean.clone();
        for v in values.iter_mut() {
            *v += c.response_noise * normal(rng);
        }
        for v in values.iter_mut() {
            if rng.random::<f64>() < c.missing_fraction {
                *v = f64::NAN;
            }
        }
        // Every drug keeps at least one observation.
        for dd in 0..d {
            if values.row(dd).iter().all(|v| v.is_nan()) {
                values[[dd, 0]] = mean[[dd, 0]];
            }
        }
        let m = LabeledMatrix::new((0..d).map(drug_name).collect(), sample_ids.clone(), values)?;
        (Some(DrugResponseMatrix::from_values(m)?), Some(mean))
    } else {
        (None, None)
    };

    let expr_ids = (0..ge + gu).map(gene_name).collect();
    let mut_ids = (0..gm).map(gene_name).collect();
    let bundle = DatasetBundle::new(
        ExpressionMatrix::new(LabeledMatrix::new(expr_ids, sample_ids.clone(), expr)?)?,
        MutationMatrix::new(LabeledMatrix::new(mut_ids, sample_ids, muts)?)?,
        response,
        metadata,
    )?;
    Ok(SyntheticCohort {
        bundle,
        latent,
        response_mean,
    })
}

/// Draws the unlabeled pre-training cohort and the labeled cohort from one
/// latent model. Identical config and seed give identical data.
pub fn synthesize_dataset(config: &SynthConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let model = LatentModel::new(
        config,
        &mut rng::seeded(derive_seed(seed, "synth-model", 0)),
    );
    let pretrain = sample_cohort(
        &model,
        config.n_pretrain,
        "T",
        false,
        &mut rng::seeded(derive_seed(seed, "synth-pretrain", 0)),
    )?;
    let labeled = sample_cohort(
        &model,
        config.n_labeled,
        "C",
        true,
        &mut rng::seeded(derive_seed(seed, "synth-labeled", 0)),
    )?;
    let truth = GroundTruth {
        seed,
        planted: config
            .planted
            .iter()
            .map(|p| PlantedTriple {
                gene: gene_name(p.gene),
                drug: drug_name(p.drug),
                delta: p.delta,
            })
            .collect(),
        driver_genes: (0..config.n_driver_genes).map(gene_name).collect(),
    };
    Ok(SyntheticData {
        pretrain,
        labeled,
        truth,
        model,
    })
}

/// Expands a binary mutation matrix into MAF-lite records, adding a few
/// silent decoys that a loader must ignore.
pub fn mutation_records(m: &MutationMatrix, seed: u64) -> Vec<MafRecord> {
    let mut rng = rng::seeded(derive_seed(seed, "maf", 0));
    let mut out = Vec::new();
    for (s, sample) in m.sample_ids().iter().enumerate() {
        for (g, gene) in m.gene_ids().iter().enumerate() {
            if m.values()[[g, s]] > 0.5 {
                let class = NONSYNONYMOUS_CLASSES.choose(&mut rng).expect("non-empty");
                out.push(MafRecord {
                    gene: gene.clone(),
                    classification: class.to_string(),
                    sample: sample.clone(),
                });
            } else if rng.random::<f64>() < 0.01 {
                out.push(MafRecord {
                    gene: gene.clone(),
                    classification: "Silent".into(),
                    sample: sample.clone(),
                });
            }
        }
    }
    out
}
