//! The complete predictor: mutation and expression encoders feeding a
//! dense head that outputs one log IC₅₀ per drug.
//!
//! The head input is `[encode_m(x_mut) ∥ encode_e(x_expr)]`, mutation latent
//! first. Either encoder may be absent, in which case the head sees only
//! the other latent.

use std::collections::HashSet;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{
    DatasetBundle, DrugResponseMatrix, ExpressionMatrix, GeneMatrix, LabeledMatrix, MutationMatrix,
    PredictionMatrix, SplitAssignment,
};
use crate::error::{invalid, Error, Result};
use crate::nn::{
    self, backprop, fit_objective, forward, init_he_uniform, loss_mse, mse_grad, Activation,
    Activations, Checkpoint, FitConfig, NetworkParams, NetworkSpec, Objective, Parameters,
    TrainRecord,
};
use crate::pretrain::{EncoderParams, Modality};
use crate::stats::{pearson, spearman};

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];

/// Trainable parameters of the three subnetworks.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugNetParams {
    pub m_enc: Option<NetworkParams>,
    pub e_enc: Option<NetworkParams>,
    pub head: NetworkParams,
}

impl Parameters for DrugNetParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(m) = &self.m_enc {
            out.extend(m.tensors());
        }
        if let Some(e) = &self.e_enc {
            out.extend(e.tensors());
        }
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(m) = &mut self.m_enc {
            out.extend(m.tensors_mut());
        }
        if let Some(e) = &mut self.e_enc {
            out.extend(e.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }
}

impl DrugNetParams {
    fn latent_dims(&self) -> (usize, usize) {
        (
            self.m_enc.as_ref().map_or(0, |m| m.spec().out_dim()),
            self.e_enc.as_ref().map_or(0, |e| e.spec().out_dim()),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Identifiers the model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelLabels {
    pub drug_ids: Vec<String>,
    /// Empty when the model has no mutation encoder.
    pub mutation_genes: Vec<String>,
    /// Empty when the model has no expression encoder.
    pub expression_genes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugNetModel {
    pub params: DrugNetParams,
    pub labels: ModelLabels,
}

/// Head layout for the given latent widths: relu hidden layers, linear output.
pub fn head_spec(latent_width: usize, hidden: &[usize], n_drugs: usize) -> Result<NetworkSpec> {
    let mut dims = vec![latent_width];
    dims.extend_from_slice(hidden);
    dims.push(n_drugs);
    NetworkSpec::chain(&dims, Activation::Linear)
}

fn check_encoder(enc: &EncoderParams, expected: Modality, genes: &[String]) -> Result<()> {
    if enc.modality != expected {
        return Err(invalid(format!(
            "expected a {expected} encoder, got a {} encoder",
            enc.modality
        )));
    }
    if enc.input_dim() != genes.len() {
        return Err(invalid(format!(
            "{expected} encoder takes {} genes but {} were given",
            enc.input_dim(),
            genes.len()
        )));
    }
    if enc
        .network
        .spec()
        .layers
        .iter()
        .any(|l| l.activation != Activation::Relu)
    {
        return Err(invalid(format!(
            "{expected} encoder layers must all be relu"
        )));
    }
    Ok(())
}

/// Joins encoders to a freshly He-initialized head.
pub fn assemble(
    m_enc: Option<&EncoderParams>,
    e_enc: Option<&EncoderParams>,
    hidden: &[usize],
    labels: ModelLabels,
    seed: u64,
) -> Result<DrugNetModel> {
    if m_enc.is_none() && e_enc.is_none() {
        return Err(invalid("the model needs at least one encoder"));
    }
    if labels.drug_ids.is_empty() {
        return Err(invalid("the model needs at least one drug"));
    }
    match m_enc {
        Some(m) => check_encoder(m, Modality::Mutation, &labels.mutation_genes)?,
        None if !labels.mutation_genes.is_empty() => {
            return Err(invalid("mutation genes given without a mutation encoder"))
        }
        None => {}
    }
    match e_enc {
        Some(e) => check_encoder(e, Modality::Expression, &labels.expression_genes)?,
        None if !labels.expression_genes.is_empty() => {
            return Err(invalid(
                "expression genes given without an expression encoder",
            ))
        }
        None => {}
    }
    let width = m_enc.map_or(0, |m| m.latent_dim()) + e_enc.map_or(0, |e| e.latent_dim());
    let head = init_he_uniform(&head_spec(width, hidden, labels.drug_ids.len())?, seed)?;
    Ok(DrugNetModel {
        params: DrugNetParams {
            m_enc: m_enc.map(|m| m.network.clone()),
            e_enc: e_enc.map(|e| e.network.clone()),
            head,
        },
        labels,
    })
}

struct Pass {
    m: Option<Activations>,
    e: Option<Activations>,
    head: Activations,
}

fn merge(m: Option<&Array2<f64>>, e: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    match (m, e) {
        (Some(m), Some(e)) => {
            concatenate(Axis(0), &[m.view(), e.view()]).map_err(|e| Error::Shape(e.to_string()))
        }
        (Some(m), None) => Ok(m.clone()),
        (None, Some(e)) => Ok(e.clone()),
        (None, None) => Err(invalid("the model needs at least one encoder")),
    }
}

fn run(params: &DrugNetParams, xm: ArrayView2<'_, f64>, xe: ArrayView2<'_, f64>) -> Result<Pass> {
    let m = params.m_enc.as_ref().map(|p| forward(p, xm)).transpose()?;
    let e = params.e_enc.as_ref().map(|p| forward(p, xe)).transpose()?;
    let merged = merge(
        m.as_ref().map(Activations::output),
        e.as_ref().map(Activations::output),
    )?;
    let head = forward(&params.head, merged.view())?;
    Ok(Pass { m, e, head })
}

/// Latent features the head sees, (l_m + l_e) × samples.
pub fn latent_features(
    params: &DrugNetParams,
    xm: ArrayView2<'_, f64>,
    xe: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let m = params
        .m_enc
        .as_ref()
        .map(|p| nn::predict(p, xm))
        .transpose()?;
    let e = params
        .e_enc
        .as_ref()
        .map(|p| nn::predict(p, xe))
        .transpose()?;
    merge(m.as_ref(), e.as_ref())
}

/// D × samples predictions from raw inputs.
pub fn forward_model(
    params: &DrugNetParams,
    xm: ArrayView2<'_, f64>,
    xe: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    Ok(run(params, xm, xe)?.head.into_output())
}

/// MSE loss and exact gradients through the head, the concatenation and
/// both encoders. Encoder gradients are zero when `freeze` is set.
pub fn joint_loss_and_grad(
    params: &DrugNetParams,
    xm: ArrayView2<'_, f64>,
    xe: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    freeze: bool,
) -> Result<(f64, DrugNetParams)> {
    let pass = run(params, xm, xe)?;
    let out = pass.head.output();
    let loss = loss_mse(out.view(), y)?;
    let g = mse_grad(out.view(), y)?;
    let (head_grad, input_grad) = backprop(&params.head, &pass.head, g, !freeze)?;
    let (lm, _) = params.latent_dims();
    let enc_grad = |p: &Option<NetworkParams>,
                    acts: &Option<Activations>,
                    rows: std::ops::Range<usize>|
     -> Result<Option<NetworkParams>> {
        match (p, acts) {
            (Some(p), Some(a)) => {
                if freeze {
                    return Ok(Some(NetworkParams::zeros(p.spec())));
                }
                let d = input_grad
                    .as_ref()
                    .expect("requested")
                    .slice(s![rows, ..])
                    .to_owned();
                Ok(Some(backprop(p, a, d, false)?.0))
            }
            _ => Ok(None),
        }
    };
    let total = params.head.spec().in_dim();
    let m_grad = enc_grad(&params.m_enc, &pass.m, 0..lm)?;
    let e_grad = enc_grad(&params.e_enc, &pass.e, lm..total)?;
    Ok((
        loss,
        DrugNetParams {
            m_enc: m_grad,
            e_enc: e_grad,
            head: head_grad,
        },
    ))
}

struct JointTask {
    xm: Array2<f64>,
    xe: Array2<f64>,
    y: Array2<f64>,
    xm_val: Array2<f64>,
    xe_val: Array2<f64>,
    y_val: Array2<f64>,
    freeze: bool,
}

impl Objective for JointTask {
    type Params = DrugNetParams;

    fn n_train(&self) -> usize {
        self.y.ncols()
    }

    fn batch_loss_and_grad(
        &self,
        params: &DrugNetParams,
        batch: &[usize],
    ) -> Result<(f64, DrugNetParams)> {
        let xm = self.xm.select(Axis(1), batch);
        let xe = self.xe.select(Axis(1), batch);
        let y = self.y.select(Axis(1), batch);
        joint_loss_and_grad(params, xm.view(), xe.view(), y.view(), self.freeze)
    }

    fn validation_loss(&self, params: &DrugNetParams) -> Result<f64> {
        let out = forward_model(params, self.xm_val.view(), self.xe_val.view())?;
        loss_mse(out.view(), self.y_val.view())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrugNetConfig {
    pub hidden: Vec<usize>,
    pub fit: FitConfig,
    /// Keep encoder parameters fixed and train the head only.
    pub freeze_encoders: bool,
}

impl Default for DrugNetConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            fit: FitConfig::default(),
            freeze_encoders: false,
        }
    }
}

/// Describes the first difference between two gene lists.
fn gene_space_error(modality: &str, model: &[String], input: &[String]) -> Error {
    let have: HashSet<&str> = input.iter().map(String::as_str).collect();
    let want: HashSet<&str> = model.iter().map(String::as_str).collect();
    let missing = model.iter().find(|g| !have.contains(g.as_str()));
    let extra = input.iter().find(|g| !want.contains(g.as_str()));
    let detail = match (missing, extra) {
        (None, None) => "same genes in a different order".to_string(),
        (m, e) => format!(
            "first missing gene: {}; first extra gene: {}",
            m.map_or("none", String::as_str),
            e.map_or("none", String::as_str)
        ),
    };
    Error::Data(format!(
        "{modality} gene space does not match the model ({detail})"
    ))
}

fn model_inputs(
    model: &DrugNetModel,
    mutation: &MutationMatrix,
    expression: &ExpressionMatrix,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if mutation.sample_ids() != expression.sample_ids() {
        return Err(invalid("mutation and expression sample orderings differ"));
    }
    let n = mutation.n_samples();
    let xm = if model.params.m_enc.is_some() {
        if mutation.gene_ids() != model.labels.mutation_genes.as_slice() {
            return Err(gene_space_error(
                "mutation",
                &model.labels.mutation_genes,
                mutation.gene_ids(),
            ));
        }
        mutation.values().clone()
    } else {
        Array2::zeros((0, n))
    };
    let xe = if model.params.e_enc.is_some() {
        if expression.gene_ids() != model.labels.expression_genes.as_slice() {
            return Err(gene_space_error(
                "expression",
                &model.labels.expression_genes,
                expression.gene_ids(),
            ));
        }
        expression.values().clone()
    } else {
        Array2::zeros((0, n))
    };
    Ok((xm, xe))
}

fn columns(all: &[String], ids: &[String]) -> Result<Vec<usize>> {
    let index: std::collections::HashMap<&str, usize> = all
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("sample '{id}' not in the cohort")))
        })
        .collect()
}

/// Response values of a bundle with no missing cells.
pub fn complete_response(bundle: &DatasetBundle) -> Result<&DrugResponseMatrix> {
    let r = bundle
        .response
        .as_ref()
        .ok_or_else(|| invalid("the cohort has no drug response"))?;
    if !r.is_complete() {
        return Err(invalid(format!(
            "drug response has {} missing cells; impute first",
            r.n_missing()
        )));
    }
    Ok(r)
}

/// Trains all three subnetworks jointly on the split's train subset with
/// early stopping on its validation subset.
pub fn train_full(
    model: &DrugNetModel,
    bundle: &DatasetBundle,
    split: &SplitAssignment,
    config: &DrugNetConfig,
) -> Result<(DrugNetModel, TrainRecord)> {
    let response = complete_response(bundle)?;
    if response.drug_ids() != model.labels.drug_ids.as_slice() {
        return Err(invalid("response drugs differ from the model's drugs"));
    }
    let (xm, xe) = model_inputs(model, &bundle.mutation, &bundle.expression)?;
    let train = columns(bundle.sample_ids(), &split.train_ids)?;
    let val = columns(bundle.sample_ids(), &split.validation_ids)?;
    if val.is_empty() {
        return Err(invalid("no validation samples"));
    }
    let y = response.values();
    let task = JointTask {
        xm: xm.select(Axis(1), &train),
        xe: xe.select(Axis(1), &train),
        y: y.select(Axis(1), &train),
        xm_val: xm.select(Axis(1), &val),
        xe_val: xe.select(Axis(1), &val),
        y_val: y.select(Axis(1), &val),
        freeze: config.freeze_encoders,
    };
    let (params, record) = fit_objective(&task, model.params.clone(), &config.fit)?;
    Ok((
        DrugNetModel {
            params,
            labels: model.labels.clone(),
        },
        record,
    ))
}

const PREDICT_CHUNK: usize = 512;

/// Predicted log IC₅₀ for every sample, in input column order.
pub fn predict_cohort(
    model: &DrugNetModel,
    mutation: &MutationMatrix,
    expression: &ExpressionMatrix,
) -> Result<PredictionMatrix> {
    let (xm, xe) = model_inputs(model, mutation, expression)?;
    let n = mutation.n_samples();
    if n == 0 {
        return Err(invalid("no samples to predict"));
    }
    let mut out = Array2::zeros((model.labels.drug_ids.len(), n));
    let mut start = 0;
    while start < n {
        let end = (start + PREDICT_CHUNK).min(n);
        let p = forward_model(
            &model.params,
            xm.slice(s![.., start..end]),
            xe.slice(s![.., start..end]),
        )?;
        out.slice_mut(s![.., start..end]).assign(&p);
        start = end;
    }
    PredictionMatrix::new(LabeledMatrix::new(
        model.labels.drug_ids.clone(),
        mutation.sample_ids().to_vec(),
        out,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subset: String,
    pub sample_ids: Vec<String>,
    pub n_cells: usize,
    pub mse: f64,
    /// Per-sample correlation across drugs; `None` when undefined.
    pub pearson: Vec<Option<f64>>,
    pub spearman: Vec<Option<f64>>,
    pub n_undefined_pearson: usize,
    pub n_undefined_spearman: usize,
}

impl EvalReport {
    pub fn per_sample_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let mut out = String::from("sample_id\tpearson\tspearman\n");
        for ((id, p), s) in self
            .sample_ids
            .iter()
            .zip(&self.pearson)
            .zip(&self.spearman)
        {
            out.push_str(&format!("{id}\t{}\t{}\n", fmt(*p), fmt(*s)));
        }
        out
    }

    pub fn defined_pearson(&self) -> Vec<f64> {
        self.pearson.iter().flatten().copied().collect()
    }

    pub fn defined_spearman(&self) -> Vec<f64> {
        self.spearman.iter().flatten().copied().collect()
    }
}

/// Scores predictions against a complete response on `subset`. With
/// `observed_only`, the MSE skips cells that were imputed.
pub fn evaluate_predictions(
    pred: &PredictionMatrix,
    truth: &DrugResponseMatrix,
    subset: &[String],
    tag: &str,
    observed_only: bool,
) -> Result<EvalReport> {
    if !truth.is_complete() {
        return Err(invalid("evaluation needs a complete response matrix"));
    }
    if pred.drug_ids() != truth.drug_ids() {
        return Err(invalid("prediction and response drugs differ"));
    }
    if subset.is_empty() {
        return Err(invalid("empty evaluation subset"));
    }
    let pc = columns(pred.sample_ids(), subset)?;
    let tc = columns(truth.sample_ids(), subset)?;
    let p = pred.values().select(Axis(1), &pc);
    let t = truth.values().select(Axis(1), &tc);
    let (mse, n_cells) = if observed_only {
        let mask = truth.imputed_mask().select(Axis(1), &tc);
        let (mut ss, mut n) = (0.0, 0usize);
        for ((a, b), imp) in p.iter().zip(t.iter()).zip(mask.iter()) {
            if !imp {
                ss += (a - b) * (a - b);
                n += 1;
            }
        }
        if n == 0 {
            return Err(invalid("no observed cells in the evaluation subset"));
        }
        (ss / n as f64, n)
    } else {
        (loss_mse(p.view(), t.view())?, p.len())
    };
    let mut pearson_v = Vec::with_capacity(subset.len());
    let mut spearman_v = Vec::with_capacity(subset.len());
    for j in 0..subset.len() {
        let a = p.column(j).to_vec();
        let b = t.column(j).to_vec();
        pearson_v.push(pearson(&a, &b).ok());
        spearman_v.push(spearman(&a, &b).ok());
    }
    Ok(EvalReport {
        subset: tag.to_string(),
        sample_ids: subset.to_vec(),
        n_cells,
        mse,
        n_undefined_pearson: pearson_v.iter().filter(|v| v.is_none()).count(),
        n_undefined_spearman: spearman_v.iter().filter(|v| v.is_none()).count(),
        pearson: pearson_v,
        spearman: spearman_v,
    })
}

/// Predicts `subset` of `bundle` and scores it.
pub fn evaluate(
    model: &DrugNetModel,
    bundle: &DatasetBundle,
    subset: &[String],
    tag: &str,
    observed_only: bool,
) -> Result<EvalReport> {
    let part = bundle.select_samples(subset)?;
    let pred = predict_cohort(model, &part.mutation, &part.expression)?;
    evaluate_predictions(&pred, complete_response(&part)?, subset, tag, observed_only)
}

pub const CHECKPOINT_KIND: &str = "drugnet";

impl DrugNetModel {
    pub fn to_checkpoint(&self, seed: u64, config_hash: String) -> Checkpoint {
        let mut c = Checkpoint::new(CHECKPOINT_KIND, seed, config_hash)
            .with_network("p_net", &self.params.head);
        if let Some(m) = &self.params.m_enc {
            c = c.with_network("m_enc", m);
        }
        if let Some(e) = &self.params.e_enc {
            c = c.with_network("e_enc", e);
        }
        c.labels
            .insert("drug_ids".into(), self.labels.drug_ids.clone());
        c.labels
            .insert("mutation_genes".into(), self.labels.mutation_genes.clone());
        c.labels.insert(
            "expression_genes".into(),
            self.labels.expression_genes.clone(),
        );
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(Error::Data(format!(
                "expected a {CHECKPOINT_KIND} checkpoint, found '{}'",
                c.kind
            )));
        }
        let opt = |name: &str| {
            c.networks
                .contains_key(name)
                .then(|| c.network(name))
                .transpose()
        };
        let params = DrugNetParams {
            m_enc: opt("m_enc")?,
            e_enc: opt("e_enc")?,
            head: c.network("p_net")?,
        };
        let labels = ModelLabels {
            drug_ids: c.label("drug_ids")?.to_vec(),
            mutation_genes: c.label("mutation_genes")?.to_vec(),
            expression_genes: c.label("expression_genes")?.to_vec(),
        };
        let (lm, le) = params.latent_dims();
        let consistent = params.head.spec().in_dim() == lm + le
            && params.head.spec().out_dim() == labels.drug_ids.len()
            && params.m_enc.as_ref().map_or(0, |m| m.spec().in_dim())
                == labels.mutation_genes.len()
            && params.e_enc.as_ref().map_or(0, |e| e.spec().in_dim())
                == labels.expression_genes.len();
        if !consistent {
            return Err(Error::Data(
                "checkpoint networks and labels disagree on dimensions".into(),
            ));
        }
        Ok(Self { params, labels })
    }
}
