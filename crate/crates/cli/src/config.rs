//! The JSON run configuration and its command-line overrides.

use std::path::{Path, PathBuf};

use drugnet_core::assoc::{ProfileOptions, ScanThresholds};
use drugnet_core::baselines::SvrConfig;
use drugnet_core::data::split::DEFAULT_FRACTIONS;
use drugnet_core::data::SynthConfig;
use drugnet_core::model::DrugNetConfig;
use drugnet_core::pipeline::PreprocessConfig;
use drugnet_core::pretrain::PretrainConfig;
use drugnet_core::study::Variant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Which preprocessed cohort a stage reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    /// The large unlabeled cohort (tumors).
    #[default]
    Pretrain,
    /// The cohort with measured drug response (cell lines).
    Labeled,
}

impl Cohort {
    pub fn name(self) -> &'static str {
        match self {
            Cohort::Pretrain => "pretrain",
            Cohort::Labeled => "labeled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationFormat {
    /// Binary genes × samples matrix.
    #[default]
    Tsv,
    /// MAF-lite records, collapsed to nonsynonymous indicators.
    Maf,
}

/// Raw input files of one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortPaths {
    pub expression: PathBuf,
    /// Expression is already log₂(TPM+1) rather than raw TPM.
    #[serde(default)]
    pub expression_is_log: bool,
    pub mutation: PathBuf,
    #[serde(default)]
    pub mutation_format: MutationFormat,
    pub metadata: PathBuf,
    #[serde(default)]
    pub response: Option<PathBuf>,
    /// Response is already log₁₀ IC₅₀ rather than μM.
    #[serde(default)]
    pub response_is_log: bool,
}

impl CohortPaths {
    fn paths(&self) -> Vec<&Path> {
        let mut v = vec![
            self.expression.as_path(),
            self.mutation.as_path(),
            self.metadata.as_path(),
        ];
        v.extend(self.response.as_deref());
        v
    }
}

/// External data replacing the synthesized cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub pretrain: CohortPaths,
    pub labeled: CohortPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// `fit.seed` is replaced by a seed derived from the run seed.
    pub model: DrugNetConfig,
    pub fractions: (f64, f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: DrugNetConfig::default(),
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub cohort: Cohort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Score only cells with a measured response.
    pub observed_only: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            observed_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub thresholds: ScanThresholds,
    pub pan_cancer: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            thresholds: ScanThresholds::default(),
            pan_cancer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Drugs to profile; empty means every drug.
    pub drugs: Vec<String>,
    pub options: ProfileOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub repetitions: usize,
    pub pca_k: usize,
    pub svr: SvrConfig,
    pub variants: Vec<Variant>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            repetitions: 100,
            pca_k: 64,
            svr: SvrConfig::default(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Drug for the density and waterfall plots; defaults to the first.
    pub drug: Option<String>,
}

/// Every stage's parameters. Unset sections take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub inputs: Option<InputPaths>,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
    pub scan: ScanConfig,
    pub profile: ProfileConfig,
    pub compare: CompareConfig,
    pub plot: PlotConfig,
}

/// Values given on the command line; each one beats the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub drugs: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if overrides.seed.is_some() {
            cfg.seed = overrides.seed;
        }
        if overrides.out.is_some() {
            cfg.out = overrides.out.clone();
        }
        if !overrides.drugs.is_empty() {
            cfg.profile.drugs = overrides.drugs.clone();
            cfg.plot.drug = overrides.drugs.first().cloned();
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::validation("no seed given: pass --seed or set \"seed\" in the config")
        })
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| {
            CliError::validation("no output directory: pass --out or set \"out\" in the config")
        })
    }

    /// Checks that the seed and output directory are set and that every
    /// referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.seed()?;
        self.out_dir()?;
        if let Some(inputs) = &self.inputs {
            if inputs.labeled.response.is_none() {
                return Err(CliError::validation("inputs.labeled.response is required"));
            }
            for p in inputs
                .pretrain
                .paths()
                .into_iter()
                .chain(inputs.labeled.paths())
            {
                if !p.is_file() {
                    return Err(CliError::validation(format!(
                        "input file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        let (a, b, c) = self.train.fractions;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(CliError::validation(format!(
                "train.fractions {:?} must lie in [0, 1] and sum to 1",
                self.train.fractions
            )));
        }
        if self.compare.repetitions == 0 || self.compare.variants.is_empty() {
            return Err(CliError::validation(
                "compare needs at least one repetition and one variant",
            ));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Digest of everything that affects results; the output directory
    /// only says where they go.
    pub fn digest(&self) -> String {
        digest_json(&Self {
            out: None,
            ..self.clone()
        })
    }
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}
