//! One function per subcommand. Each reads its inputs from the output
//! directory (or from configured raw files), writes its outputs there and
//! returns them for the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use drugnet_core::assoc::{pan_cancer_scan, per_cancer_scan, profile_groups, ScanResult};
use drugnet_core::data::{
    self, load_drug_response, load_expression_tsv, load_imputed_response, load_metadata,
    load_mutation_maf, load_mutation_tsv, load_predictions, split_samples, synthesize_dataset,
    write_drug_response, write_expression_tsv, write_imputed_mask, write_maf_lite, write_metadata,
    write_mutation_tsv, write_predictions, DatasetBundle, GeneMatrix, SampleMetadata,
    SplitAssignment,
};
use drugnet_core::model::{
    assemble, evaluate, predict_cohort, train_full, DrugNetModel, EvalReport, ModelLabels,
};
use drugnet_core::nn::Checkpoint;
use drugnet_core::pipeline::preprocess_cohorts;
use drugnet_core::pretrain::{
    hyper_search, pretrain_encoder, pretrain_hash, reconstruction_mse, EncoderParams, Modality,
};
use drugnet_core::rng::derive_seed;
use drugnet_core::stats::median;
use drugnet_core::study::{repeat_experiment, StudyConfig, StudyInputs};
use serde::Serialize;
use serde_json::json;

use crate::config::{digest_json, Cohort, CohortPaths, MutationFormat, RunConfig};
use crate::error::CliError;
use crate::manifest::{file_digest, file_key, RunManifest, StageRecord};
use crate::plot;

/// Subcommands that read and write the output directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synthesize,
    Preprocess,
    Pretrain,
    Train,
    Predict,
    Evaluate,
    Scan,
    Profile,
    Compare,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synthesize,
        Stage::Preprocess,
        Stage::Pretrain,
        Stage::Train,
        Stage::Predict,
        Stage::Evaluate,
        Stage::Scan,
        Stage::Profile,
        Stage::Compare,
        Stage::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synthesize => "synthesize",
            Stage::Preprocess => "preprocess",
            Stage::Pretrain => "pretrain",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Scan => "scan",
            Stage::Profile => "profile",
            Stage::Compare => "compare",
            Stage::Plot => "plot",
        }
    }

    /// Subdirectory of the output directory holding this stage's files.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Synthesize => "synth",
            other => other.name(),
        }
    }

    fn from_dir(dir: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.dir() == dir)
    }
}

/// Locations of every file the pipeline reads or writes.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn file(&self, stage: Stage, name: &str) -> PathBuf {
        self.root.join(stage.dir()).join(name)
    }

    fn cohort_file(&self, stage: Stage, cohort: Cohort, kind: &str) -> PathBuf {
        self.file(stage, &format!("{}_{kind}.tsv", cohort.name()))
    }

    fn synth_paths(&self, cohort: Cohort) -> CohortPaths {
        let f = |kind: &str| self.cohort_file(Stage::Synthesize, cohort, kind);
        CohortPaths {
            expression: f("expression"),
            expression_is_log: true,
            mutation: f("mutation"),
            mutation_format: MutationFormat::Tsv,
            metadata: f("metadata"),
            response: (cohort == Cohort::Labeled).then(|| f("response")),
            response_is_log: true,
        }
    }

    fn encoder(&self, m: Modality) -> PathBuf {
        self.file(Stage::Pretrain, &format!("{m}_encoder.json"))
    }
}

/// Files written by a stage plus the seeds it used.
#[derive(Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
}

impl Outputs {
    fn write(&mut self, path: PathBuf, content: &str) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        }
        fs::write(&path, content)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("value serializes");
        s.push('\n');
        self.write(path, &s)
    }

    /// Records a file written by a library function.
    fn track(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    fn seed(&mut self, name: &str, value: u64) -> u64 {
        self.seeds.insert(name.to_string(), value);
        value
    }
}

fn raw_paths(cfg: &RunConfig, layout: &Layout, cohort: Cohort) -> CohortPaths {
    match &cfg.inputs {
        Some(i) if cohort == Cohort::Pretrain => i.pretrain.clone(),
        Some(i) => i.labeled.clone(),
        None => layout.synth_paths(cohort),
    }
}

fn preprocessed(layout: &Layout, cohort: Cohort) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = ["expression", "mutation", "metadata"]
        .iter()
        .map(|k| layout.cohort_file(Stage::Preprocess, cohort, k))
        .collect();
    if cohort == Cohort::Labeled {
        v.push(layout.cohort_file(Stage::Preprocess, cohort, "response"));
        v.push(layout.cohort_file(Stage::Preprocess, cohort, "imputed_mask"));
    }
    v
}

/// Files a stage reads, checked against the manifest before it runs.
pub fn stage_inputs(stage: Stage, cfg: &RunConfig, layout: &Layout) -> Vec<PathBuf> {
    let encoders = || {
        vec![
            layout.encoder(Modality::Mutation),
            layout.encoder(Modality::Expression),
        ]
    };
    let model = || layout.file(Stage::Train, "model.json");
    let predictions = || layout.file(Stage::Predict, "predictions.tsv");
    let cohort = cfg.predict.cohort;
    match stage {
        Stage::Synthesize => vec![],
        Stage::Preprocess => {
            let mut v = Vec::new();
            for c in [Cohort::Pretrain, Cohort::Labeled] {
                let p = raw_paths(cfg, layout, c);
                v.extend([p.expression, p.mutation, p.metadata]);
                v.extend(p.response);
            }
            v
        }
        Stage::Pretrain => vec![
            layout.cohort_file(Stage::Preprocess, Cohort::Pretrain, "mutation"),
            layout.cohort_file(Stage::Preprocess, Cohort::Pretrain, "expression"),
        ],
        Stage::Train | Stage::Compare => {
            let mut v = preprocessed(layout, Cohort::Labeled);
            v.extend(encoders());
            v
        }
        Stage::Predict => {
            let mut v = vec![model()];
            v.extend([
                layout.cohort_file(Stage::Preprocess, cohort, "mutation"),
                layout.cohort_file(Stage::Preprocess, cohort, "expression"),
            ]);
            v
        }
        Stage::Evaluate => {
            let mut v = vec![model(), layout.file(Stage::Train, "split.json")];
            v.extend(preprocessed(layout, Cohort::Labeled));
            v
        }
        Stage::Scan => vec![
            predictions(),
            layout.cohort_file(Stage::Preprocess, cohort, "mutation"),
            layout.cohort_file(Stage::Preprocess, cohort, "metadata"),
        ],
        Stage::Profile => {
            let mut v = vec![predictions()];
            v.extend(preprocessed(layout, cohort).into_iter().take(3));
            v
        }
        Stage::Plot => vec![
            predictions(),
            layout.file(Stage::Evaluate, "test_per_sample.tsv"),
        ],
    }
}

/// The configuration a stage depends on, digested into its record.
fn stage_config(stage: Stage, cfg: &RunConfig) -> serde_json::Value {
    let v = match stage {
        Stage::Synthesize => json!(cfg.synth),
        Stage::Preprocess => json!({ "preprocess": cfg.preprocess, "inputs": cfg.inputs }),
        Stage::Pretrain => json!(cfg.pretrain),
        Stage::Train => json!(cfg.train),
        Stage::Predict => json!(cfg.predict),
        Stage::Evaluate => json!(cfg.evaluate),
        Stage::Scan => json!({ "scan": cfg.scan, "cohort": cfg.predict.cohort }),
        Stage::Profile => json!({ "profile": cfg.profile, "cohort": cfg.predict.cohort }),
        Stage::Compare => json!({ "compare": cfg.compare, "train": cfg.train }),
        Stage::Plot => json!({ "plot": cfg.plot, "fraction": cfg.profile.options.fraction }),
    };
    json!({ "seed": cfg.seed, "stage": stage.name(), "config": v })
}

/// Validates the config, checks upstream digests, runs the stage and
/// records it in the manifest.
pub fn run_stage(stage: Stage, cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let out = cfg.out_dir()?;
    let layout = Layout::new(out);
    let mut manifest = RunManifest::load_or_new(out, &cfg.digest())?;
    let inputs = stage_inputs(stage, cfg, &layout);
    manifest.check_inputs(out, &inputs, |key| {
        key.split('/')
            .next()
            .and_then(Stage::from_dir)
            .map(Stage::name)
    })?;
    let start = Instant::now();
    log::info!("running {}", stage.name());
    let mut outputs = Outputs::default();
    match stage {
        Stage::Synthesize => synthesize(cfg, &layout, seed, &mut outputs),
        Stage::Preprocess => preprocess(cfg, &layout, &mut outputs),
        Stage::Pretrain => pretrain(cfg, &layout, seed, &mut outputs),
        Stage::Train => train(cfg, &layout, seed, &mut outputs),
        Stage::Predict => predict(cfg, &layout, &mut outputs),
        Stage::Evaluate => evaluate_stage(cfg, &layout, &mut outputs),
        Stage::Scan => scan(cfg, &layout, &mut outputs),
        Stage::Profile => profile(cfg, &layout, &mut outputs),
        Stage::Compare => compare(cfg, &layout, seed, &mut outputs),
        Stage::Plot => plot_stage(cfg, &layout, &mut outputs),
    }?;
    let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>, CliError> {
        paths
            .iter()
            .map(|p| Ok((file_key(out, p), file_digest(p)?)))
            .collect()
    };
    let record = StageRecord {
        stage: stage.name().to_string(),
        config_digest: digest_json(&stage_config(stage, cfg)),
        seeds: outputs.seeds.clone(),
        inputs: digests(&inputs)?,
        outputs: digests(&outputs.files)?,
        wall_clock_ms: start.elapsed().as_millis() as u64,
    };
    manifest.record(record);
    manifest.save(out)
}

fn synthesize(
    cfg: &RunConfig,
    layout: &Layout,
    seed: u64,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let data = synthesize_dataset(&cfg.synth, out.seed("synth", seed))?;
    for (cohort, c) in [
        (Cohort::Pretrain, &data.pretrain),
        (Cohort::Labeled, &data.labeled),
    ] {
        let p = layout.synth_paths(cohort);
        write_expression_tsv(&c.bundle.expression, &p.expression)?;
        out.track(p.expression);
        write_mutation_tsv(&c.bundle.mutation, &p.mutation)?;
        out.track(p.mutation);
        write_metadata(&c.bundle.metadata, &p.metadata)?;
        out.track(p.metadata);
        if let (Some(r), Some(path)) = (&c.bundle.response, p.response) {
            write_drug_response(r, &path)?;
            out.track(path);
        }
    }
    let maf = layout.file(Stage::Synthesize, "pretrain_mutation.maf");
    write_maf_lite(
        &data::synth::mutation_records(&data.pretrain.bundle.mutation, seed),
        &maf,
    )?;
    out.track(maf);
    out.write_json(
        layout.file(Stage::Synthesize, "ground_truth.json"),
        &data.truth,
    )
}

fn select_metadata(meta: &[SampleMetadata], ids: &[String]) -> Vec<SampleMetadata> {
    let index: BTreeMap<&str, &SampleMetadata> =
        meta.iter().map(|m| (m.sample_id.as_str(), m)).collect();
    ids.iter().map(|id| index[id.as_str()].clone()).collect()
}

/// Loads raw cohort files and restricts them to the samples present in
/// every file, in expression order.
pub fn load_raw_cohort(p: &CohortPaths) -> Result<DatasetBundle, CliError> {
    let expression = load_expression_tsv(&p.expression, p.expression_is_log)?;
    let metadata = load_metadata(&p.metadata)?;
    let mutation = match p.mutation_format {
        MutationFormat::Tsv => load_mutation_tsv(&p.mutation)?,
        MutationFormat::Maf => {
            let (m, summary) = load_mutation_maf(&p.mutation, expression.sample_ids())?;
            log::info!(
                "{}: {} records, {} nonsynonymous, {} of unknown samples",
                p.mutation.display(),
                summary.records,
                summary.nonsynonymous,
                summary.unknown_sample
            );
            m
        }
    };
    let response = p
        .response
        .as_ref()
        .map(|r| load_drug_response(r, p.response_is_log))
        .transpose()?;
    let mut keep: HashSet<&str> = mutation.sample_ids().iter().map(String::as_str).collect();
    let meta_ids: HashSet<&str> = metadata.iter().map(|m| m.sample_id.as_str()).collect();
    keep.retain(|s| meta_ids.contains(s));
    if let Some(r) = &response {
        let rs: HashSet<&str> = r.sample_ids().iter().map(String::as_str).collect();
        keep.retain(|s| rs.contains(s));
    }
    let ids: Vec<String> = expression
        .sample_ids()
        .iter()
        .filter(|s| keep.contains(s.as_str()))
        .cloned()
        .collect();
    if ids.len() < expression.n_samples() {
        log::info!(
            "{}: keeping {} of {} samples present in every file",
            p.expression.display(),
            ids.len(),
            expression.n_samples()
        );
    }
    if ids.is_empty() {
        return Err(CliError::data(format!(
            "{}: no sample is present in every input file",
            p.expression.display()
        )));
    }
    Ok(DatasetBundle::new(
        expression.select_samples(&ids)?,
        mutation.select_samples(&ids)?,
        response.map(|r| r.select_samples(&ids)).transpose()?,
        select_metadata(&metadata, &ids),
    )?)
}

fn write_cohort(
    layout: &Layout,
    cohort: Cohort,
    b: &DatasetBundle,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let f = |k: &str| layout.cohort_file(Stage::Preprocess, cohort, k);
    write_expression_tsv(&b.expression, &f("expression"))?;
    out.track(f("expression"));
    write_mutation_tsv(&b.mutation, &f("mutation"))?;
    out.track(f("mutation"));
    write_metadata(&b.metadata, &f("metadata"))?;
    out.track(f("metadata"));
    if let Some(r) = &b.response {
        write_drug_response(r, &f("response"))?;
        out.track(f("response"));
        write_imputed_mask(r, &f("imputed_mask"))?;
        out.track(f("imputed_mask"));
    }
    Ok(())
}

/// Loads a preprocessed cohort from the output directory.
pub fn load_cohort(layout: &Layout, cohort: Cohort) -> Result<DatasetBundle, CliError> {
    let f = |k: &str| layout.cohort_file(Stage::Preprocess, cohort, k);
    let response = match cohort {
        Cohort::Labeled => Some(load_imputed_response(&f("response"), &f("imputed_mask"))?),
        Cohort::Pretrain => None,
    };
    Ok(DatasetBundle::new(
        load_expression_tsv(&f("expression"), true)?,
        load_mutation_tsv(&f("mutation"))?,
        response,
        load_metadata(&f("metadata"))?,
    )?)
}

fn preprocess(cfg: &RunConfig, layout: &Layout, out: &mut Outputs) -> Result<(), CliError> {
    let unlabeled = load_raw_cohort(&raw_paths(cfg, layout, Cohort::Pretrain))?;
    let labeled = load_raw_cohort(&raw_paths(cfg, layout, Cohort::Labeled))?;
    let (u, l, summary) = preprocess_cohorts(&unlabeled, &labeled, &cfg.preprocess)?;
    write_cohort(layout, Cohort::Pretrain, &u, out)?;
    write_cohort(layout, Cohort::Labeled, &l, out)?;
    out.write_json(layout.file(Stage::Preprocess, "summary.json"), &summary)
}

fn pretrain(
    cfg: &RunConfig,
    layout: &Layout,
    seed: u64,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let f = |k: &str| layout.cohort_file(Stage::Preprocess, Cohort::Pretrain, k);
    let mutation = load_mutation_tsv(&f("mutation"))?;
    let expression = load_expression_tsv(&f("expression"), true)?;
    let mut summary = BTreeMap::new();
    for (i, (modality, genes, x)) in [
        (Modality::Mutation, mutation.gene_ids(), mutation.values()),
        (
            Modality::Expression,
            expression.gene_ids(),
            expression.values(),
        ),
    ]
    .into_iter()
    .enumerate()
    {
        let search_seed = out.seed(
            &format!("{modality}_search"),
            derive_seed(seed, "pretrain-search", i as u64),
        );
        let final_seed = out.seed(
            &format!("{modality}_final"),
            derive_seed(seed, "pretrain-final", i as u64),
        );
        let search = hyper_search(x.view(), &cfg.pretrain, search_seed)?;
        out.write(
            layout.file(Stage::Pretrain, &format!("{modality}_search.tsv")),
            &search.to_tsv(),
        )?;
        let spec = *search.best();
        let trained = pretrain_encoder(&spec, x.view(), modality, &cfg.pretrain, final_seed)?;
        out.write(
            layout.file(Stage::Pretrain, &format!("{modality}_history.tsv")),
            &trained.record.to_tsv(),
        )?;
        let path = layout.encoder(modality);
        trained
            .encoder
            .to_checkpoint(genes, final_seed, pretrain_hash(&spec, &cfg.pretrain))
            .save(&path)?;
        out.track(path);
        summary.insert(
            modality.to_string(),
            json!({
                "chosen": spec,
                "final_val_loss": trained.record.final_val_loss(),
                "reconstruction_mse": reconstruction_mse(&trained.autoencoder, x.view())?,
                "data_variance": x.var(0.0),
            }),
        );
    }
    out.write_json(layout.file(Stage::Pretrain, "summary.json"), &summary)
}

fn load_encoder(
    layout: &Layout,
    modality: Modality,
    genes: &[String],
) -> Result<EncoderParams, CliError> {
    let path = layout.encoder(modality);
    let (enc, enc_genes) = EncoderParams::from_checkpoint(&Checkpoint::load(&path)?)?;
    if enc.modality != modality {
        return Err(CliError::data(format!(
            "{} holds a {} encoder",
            path.display(),
            enc.modality
        )));
    }
    if enc_genes != genes {
        return Err(CliError::data(format!(
            "{} was pre-trained on a different {modality} gene list; re-run `drugnet pretrain`",
            path.display()
        )));
    }
    Ok(enc)
}

fn load_split(layout: &Layout) -> Result<SplitAssignment, CliError> {
    let path = layout.file(Stage::Train, "split.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_model(layout: &Layout) -> Result<DrugNetModel, CliError> {
    Ok(DrugNetModel::from_checkpoint(&Checkpoint::load(
        &layout.file(Stage::Train, "model.json"),
    )?)?)
}

fn train(cfg: &RunConfig, layout: &Layout, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let bundle = load_cohort(layout, Cohort::Labeled)?;
    let m_enc = load_encoder(layout, Modality::Mutation, bundle.mutation.gene_ids())?;
    let e_enc = load_encoder(layout, Modality::Expression, bundle.expression.gene_ids())?;
    let split_seed = out.seed("split", derive_seed(seed, "split", 0));
    let init_seed = out.seed("head_init", derive_seed(seed, "train-init", 0));
    let shuffle_seed = out.seed("shuffle", derive_seed(seed, "train-shuffle", 0));
    let split = split_samples(bundle.sample_ids(), split_seed, cfg.train.fractions)?;
    let labels = ModelLabels {
        drug_ids: bundle
            .response
            .as_ref()
            .expect("labeled cohort")
            .drug_ids()
            .to_vec(),
        mutation_genes: bundle.mutation.gene_ids().to_vec(),
        expression_genes: bundle.expression.gene_ids().to_vec(),
    };
    let model = assemble(
        Some(&m_enc),
        Some(&e_enc),
        &cfg.train.model.hidden,
        labels,
        init_seed,
    )?;
    let mut config = cfg.train.model.clone();
    config.fit.seed = shuffle_seed;
    let (trained, record) = train_full(&model, &bundle, &split, &config)?;
    let path = layout.file(Stage::Train, "model.json");
    trained
        .to_checkpoint(seed, digest_json(&cfg.train))
        .save(&path)?;
    out.track(path);
    out.write_json(layout.file(Stage::Train, "split.json"), &split)?;
    out.write(layout.file(Stage::Train, "split.tsv"), &split.to_tsv())?;
    out.write(layout.file(Stage::Train, "history.tsv"), &record.to_tsv())?;
    out.write_json(
        layout.file(Stage::Train, "summary.json"),
        &json!({
            "n_train": split.train_ids.len(),
            "n_validation": split.validation_ids.len(),
            "n_test": split.test_ids.len(),
            "best_epoch": record.best_epoch,
            "stopped_epoch": record.stopped_epoch,
            "best_val_loss": record.best_val_loss(),
            "parameters": trained.params.parameter_count(),
        }),
    )
}

fn predict(cfg: &RunConfig, layout: &Layout, out: &mut Outputs) -> Result<(), CliError> {
    let model = load_model(layout)?;
    let cohort = cfg.predict.cohort;
    let mutation = load_mutation_tsv(&layout.cohort_file(Stage::Preprocess, cohort, "mutation"))?;
    let expression = load_expression_tsv(
        &layout.cohort_file(Stage::Preprocess, cohort, "expression"),
        true,
    )?;
    let pred = predict_cohort(&model, &mutation, &expression)?;
    let path = layout.file(Stage::Predict, "predictions.tsv");
    write_predictions(&pred, &path)?;
    out.track(path);
    Ok(())
}

fn report_json(r: &EvalReport) -> serde_json::Value {
    let med = |v: Vec<f64>| if v.is_empty() { None } else { Some(median(&v)) };
    json!({
        "n_samples": r.sample_ids.len(),
        "n_cells": r.n_cells,
        "mse": r.mse,
        "median_pearson": med(r.defined_pearson()),
        "median_spearman": med(r.defined_spearman()),
        "n_undefined_pearson": r.n_undefined_pearson,
        "n_undefined_spearman": r.n_undefined_spearman,
    })
}

/// Test MSE of predicting every drug by its training-subset mean.
fn mean_predictor_mse(
    bundle: &DatasetBundle,
    split: &SplitAssignment,
    observed_only: bool,
) -> Result<f64, CliError> {
    let r = bundle.response.as_ref().expect("labeled cohort");
    let train = r.select_samples(&split.train_ids)?;
    let test = r.select_samples(&split.test_ids)?;
    let (mut ss, mut n) = (0.0, 0usize);
    for d in 0..r.n_drugs() {
        let mu = train.values().row(d).mean().unwrap_or(0.0);
        for (v, imp) in test.values().row(d).iter().zip(test.imputed_mask().row(d)) {
            if !(observed_only && *imp) {
                ss += (v - mu) * (v - mu);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(CliError::validation("no test cells to score"));
    }
    Ok(ss / n as f64)
}

fn evaluate_stage(cfg: &RunConfig, layout: &Layout, out: &mut Outputs) -> Result<(), CliError> {
    let model = load_model(layout)?;
    let split = load_split(layout)?;
    let bundle = load_cohort(layout, Cohort::Labeled)?;
    let observed = cfg.evaluate.observed_only;
    let mut report = serde_json::Map::new();
    for (tag, ids) in [
        ("train", &split.train_ids),
        ("validation", &split.validation_ids),
        ("test", &split.test_ids),
    ] {
        if ids.is_empty() {
            continue;
        }
        let r = evaluate(&model, &bundle, ids, tag, observed)?;
        out.write(
            layout.file(Stage::Evaluate, &format!("{tag}_per_sample.tsv")),
            &r.per_sample_tsv(),
        )?;
        report.insert(tag.to_string(), report_json(&r));
    }
    if !split.test_ids.is_empty() {
        report.insert(
            "mean_predictor_test_mse".into(),
            json!(mean_predictor_mse(&bundle, &split, observed)?),
        );
    }
    report.insert("observed_only".into(), json!(observed));
    out.write_json(layout.file(Stage::Evaluate, "report.json"), &report)
}

fn scan_summary(r: &ScanResult) -> serde_json::Value {
    json!({
        "n_tests": r.n_tests,
        "n_significant": r.records.len(),
        "n_sensitive": r.records.iter().filter(|a| a.delta_ic50 < 0.0).count(),
        "n_resistant": r.records.iter().filter(|a| a.delta_ic50 > 0.0).count(),
        "skipped_cancers": r.skipped_cancers,
    })
}

fn scan(cfg: &RunConfig, layout: &Layout, out: &mut Outputs) -> Result<(), CliError> {
    let cohort = cfg.predict.cohort;
    let pred = load_predictions(&layout.file(Stage::Predict, "predictions.tsv"))?;
    let mutation = load_mutation_tsv(&layout.cohort_file(Stage::Preprocess, cohort, "mutation"))?;
    let meta = load_metadata(&layout.cohort_file(Stage::Preprocess, cohort, "metadata"))?;
    let th = &cfg.scan.thresholds;
    let per = per_cancer_scan(&pred, &mutation, &meta, th)?;
    out.write(layout.file(Stage::Scan, "per_cancer.tsv"), &per.to_tsv())?;
    out.write(
        layout.file(Stage::Scan, "per_cancer_genes.tsv"),
        &per.gene_summary_tsv(),
    )?;
    let mut summary = json!({ "per_cancer": scan_summary(&per), "cancers": per.cancer_summary() });
    if cfg.scan.pan_cancer {
        let pan = pan_cancer_scan(&pred, &mutation, th)?;
        out.write(layout.file(Stage::Scan, "pan_cancer.tsv"), &pan.to_tsv())?;
        out.write(
            layout.file(Stage::Scan, "pan_cancer_genes.tsv"),
            &pan.gene_summary_tsv(),
        )?;
        summary["pan_cancer"] = scan_summary(&pan);
    }
    out.write_json(layout.file(Stage::Scan, "summary.json"), &summary)
}

/// File-name-safe form of a drug identifier.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn profile(cfg: &RunConfig, layout: &Layout, out: &mut Outputs) -> Result<(), CliError> {
    let cohort = cfg.predict.cohort;
    let pred = load_predictions(&layout.file(Stage::Predict, "predictions.tsv"))?;
    let f = |k: &str| layout.cohort_file(Stage::Preprocess, cohort, k);
    let expression = load_expression_tsv(&f("expression"), true)?;
    let mutation = load_mutation_tsv(&f("mutation"))?;
    let metadata = load_metadata(&f("metadata"))?;
    let bundle = DatasetBundle::new(expression, mutation, None, metadata)?;
    let drugs = if cfg.profile.drugs.is_empty() {
        pred.drug_ids().to_vec()
    } else {
        cfg.profile.drugs.clone()
    };
    let mut seen = HashSet::new();
    for drug in &drugs {
        let stem = file_stem(drug);
        if !seen.insert(stem.clone()) {
            return Err(CliError::validation(format!(
                "drug '{drug}' maps to a duplicate file name"
            )));
        }
        let p = profile_groups(&pred, drug, &bundle, &cfg.profile.options)?;
        let file = |k: &str| layout.file(Stage::Profile, &format!("{stem}/{k}"));
        out.write(file("composition.tsv"), &p.composition_tsv())?;
        out.write(file("mutations.tsv"), &p.mutations_tsv())?;
        out.write(file("expression.tsv"), &p.expression_tsv())?;
        out.write(file("summary.json"), &p.summary_json())?;
    }
    Ok(())
}

fn compare(cfg: &RunConfig, layout: &Layout, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let bundle = load_cohort(layout, Cohort::Labeled)?;
    let m_enc = load_encoder(layout, Modality::Mutation, bundle.mutation.gene_ids())?;
    let e_enc = load_encoder(layout, Modality::Expression, bundle.expression.gene_ids())?;
    let inputs = StudyInputs {
        bundle: &bundle,
        m_enc: &m_enc,
        e_enc: &e_enc,
        config: StudyConfig {
            model: cfg.train.model.clone(),
            pca_k: cfg.compare.pca_k,
            svr: cfg.compare.svr,
            fractions: cfg.train.fractions,
        },
    };
    let base = out.seed("base", derive_seed(seed, "compare", 0));
    let study = repeat_experiment(
        &inputs,
        cfg.compare.repetitions,
        base,
        &cfg.compare.variants,
    )?;
    out.write(
        layout.file(Stage::Compare, "report.tsv"),
        &study.report_tsv(),
    )?;
    out.write(layout.file(Stage::Compare, "runs.tsv"), &study.runs_tsv())
}

/// Defined (Pearson, Spearman) pairs of a per-sample evaluation table.
pub fn read_correlations(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some("sample_id\tpearson\tspearman") {
        return Err(CliError::data(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 3 {
            return Err(CliError::data(format!(
                "{}: row {} has {} columns",
                path.display(),
                i + 2,
                cells.len()
            )));
        }
        if cells[1] == "NA" || cells[2] == "NA" {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                CliError::data(format!(
                    "{}: row {}: '{s}' is not a number",
                    path.display(),
                    i + 2
                ))
            })
        };
        out.push((parse(cells[1])?, parse(cells[2])?));
    }
    Ok(out)
}

fn plot_stage(cfg: &RunConfig, layout: &Layout, out: &mut Outputs) -> Result<(), CliError> {
    let pred = load_predictions(&layout.file(Stage::Predict, "predictions.tsv"))?;
    let drug = match &cfg.plot.drug {
        Some(d) => d.clone(),
        None => pred.drug_ids()[0].clone(),
    };
    let d = pred
        .drug_ids()
        .iter()
        .position(|x| *x == drug)
        .ok_or_else(|| CliError::validation(format!("drug '{drug}' is not in the predictions")))?;
    let values = pred.values().row(d).to_vec();
    out.write(
        layout.file(Stage::Plot, "density.svg"),
        &plot::density_svg(&values, &format!("{drug}: predicted response density"))?,
    )?;
    let (svg, _) = plot::waterfall_svg(
        &values,
        pred.sample_ids(),
        cfg.profile.options.fraction,
        &format!("{drug}: ranked predictions"),
    )?;
    out.write(layout.file(Stage::Plot, "waterfall.svg"), &svg)?;
    let pairs = read_correlations(&layout.file(Stage::Evaluate, "test_per_sample.tsv"))?;
    out.write(
        layout.file(Stage::Plot, "correlation.svg"),
        &plot::correlation_svg(&pairs, "test samples: per-sample correlation")?,
    )
}
