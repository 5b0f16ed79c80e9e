//! Autoencoder pre-training on the unlabeled cohort.
//!
//! Each modality gets a mirrored autoencoder `in → l1 → l2 → l3 → l2 → l1 → in`
//! (relu hidden layers, linear output). A grid search trains every
//! candidate for a fixed short budget, the winner is retrained for a longer
//! budget, and its encoder half is exported for transfer.

use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{
    self, config_hash, init_he_uniform, Activation, AdamConfig, Checkpoint, FitConfig,
    NetworkParams, NetworkSpec, TrainRecord,
};
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
    pub batch_size: usize,
}

impl AutoencoderSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.input_dim > self.l1 && self.l1 > self.l2 && self.l2 > self.l3 && self.l3 >= 1;
        if !ok {
            return Err(invalid(format!(
                "autoencoder widths must strictly decrease: {} > {} > {} > {} >= 1",
                self.input_dim, self.l1, self.l2, self.l3
            )));
        }
        if self.batch_size == 0 {
            return Err(invalid("autoencoder batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn encoder_dims(&self) -> [usize; 4] {
        [self.input_dim, self.l1, self.l2, self.l3]
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        self.validate()?;
        NetworkSpec::chain(
            &[
                self.input_dim,
                self.l1,
                self.l2,
                self.l3,
                self.l2,
                self.l1,
                self.input_dim,
            ],
            Activation::Linear,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Mutation,
    Expression,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Mutation => "mutation",
            Modality::Expression => "expression",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mutation" => Ok(Modality::Mutation),
            "expression" => Ok(Modality::Expression),
            other => Err(Error::Data(format!("unknown modality '{other}'"))),
        }
    }
}

/// The encoder half of a trained autoencoder: `in → l1 → l2 → l3`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub modality: Modality,
    pub network: NetworkParams,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.network.spec().in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.network.spec().out_dim()
    }

    pub fn to_checkpoint(&self, genes: &[String], seed: u64, config_hash: String) -> Checkpoint {
        let mut c =
            Checkpoint::new("encoder", seed, config_hash).with_network("encoder", &self.network);
        c.tags.insert("modality".into(), self.modality.to_string());
        c.labels.insert("genes".into(), genes.to_vec());
        c
    }

    /// Returns the encoder and its gene space.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<(Self, Vec<String>)> {
        if c.kind != "encoder" {
            return Err(Error::Data(format!(
                "expected an encoder checkpoint, found '{}'",
                c.kind
            )));
        }
        let modality = c
            .tags
            .get("modality")
            .ok_or_else(|| Error::Data("encoder checkpoint has no modality tag".into()))?
            .parse()?;
        let network = c.network("encoder")?;
        let genes = c.label("genes")?.to_vec();
        if genes.len() != network.spec().in_dim() {
            return Err(Error::Data(
                "encoder gene list does not match its input width".into(),
            ));
        }
        Ok((Self { modality, network }, genes))
    }
}

/// He-initialized mirrored autoencoder.
pub fn build_autoencoder(spec: &AutoencoderSpec, seed: u64) -> Result<NetworkParams> {
    init_he_uniform(&spec.network_spec()?, seed)
}

/// He-initialized encoder half only, as used by randomly initialized models.
pub fn random_encoder(dims: [usize; 4], modality: Modality, seed: u64) -> Result<EncoderParams> {
    let spec = NetworkSpec::chain(&dims, Activation::Relu)?;
    Ok(EncoderParams {
        modality,
        network: init_he_uniform(&spec, seed)?,
    })
}

/// Forward pass through the encoder half. `x` is genes × samples.
pub fn encode(enc: &EncoderParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    nn::predict(&enc.network, x)
}

/// Hyperparameter options; enumeration order is l1, l2, l3, batch (inner).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchGrid {
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
    pub l3: Vec<usize>,
    pub batch: Vec<usize>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            l1: vec![4096, 2048, 1024],
            l2: vec![512, 256, 128],
            l3: vec![64, 32, 16],
            batch: vec![128, 64],
        }
    }
}

fn capped(options: &[usize], cap: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &o in options {
        let v = o.min(cap).max(1);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

impl SearchGrid {
    pub fn cardinality(&self) -> usize {
        self.l1.len() * self.l2.len() * self.l3.len() * self.batch.len()
    }

    /// Grid points for `input_dim`. Widths of layer k are capped at
    /// ⌈input_dim / 2ᵏ⌉, duplicates collapse, and combinations that do not
    /// strictly narrow are dropped.
    pub fn points(&self, input_dim: usize) -> Vec<AutoencoderSpec> {
        let l1 = capped(&self.l1, input_dim.div_ceil(2));
        let l2 = capped(&self.l2, input_dim.div_ceil(4));
        let l3 = capped(&self.l3, input_dim.div_ceil(8));
        let mut out = Vec::new();
        for &a in &l1 {
            for &b in &l2 {
                for &c in &l3 {
                    for &batch in &self.batch {
                        let spec = AutoencoderSpec {
                            input_dim,
                            l1: a,
                            l2: b,
                            l3: c,
                            batch_size: batch,
                        };
                        if spec.validate().is_ok() {
                            out.push(spec);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub grid: SearchGrid,
    pub search_epochs: usize,
    pub final_epochs: usize,
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            grid: SearchGrid::default(),
            search_epochs: 20,
            final_epochs: 100,
            validation_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint {
    pub spec: AutoencoderSpec,
    /// Validation reconstruction MSE after the search budget; +∞ if the
    /// run diverged.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub points: Vec<SearchPoint>,
    pub chosen: usize,
}

impl SearchResult {
    pub fn best(&self) -> &AutoencoderSpec {
        &self.points[self.chosen].spec
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("l1\tl2\tl3\tbatch\tval_loss\tchosen\n");
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                p.spec.l1,
                p.spec.l2,
                p.spec.l3,
                p.spec.batch_size,
                p.val_loss,
                u8::from(i == self.chosen)
            ));
        }
        out
    }
}

/// Splits sample columns into train / validation for reconstruction.
fn holdout(
    data: ArrayView2<'_, f64>,
    fraction: f64,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = data.ncols();
    if n < 2 {
        return Err(invalid("pre-training needs at least two samples"));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(invalid("validation fraction must lie in [0, 1)"));
    }
    let n_val = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(derive_seed(seed, "ae-holdout", 0)));
    let (val, train) = order.split_at(n_val);
    Ok((data.select(Axis(1), train), data.select(Axis(1), val)))
}

fn train_autoencoder(
    spec: &AutoencoderSpec,
    train: &Array2<f64>,
    val: &Array2<f64>,
    epochs: usize,
    adam: AdamConfig,
    seed: u64,
) -> Result<(NetworkParams, TrainRecord)> {
    let init = build_autoencoder(spec, derive_seed(seed, "ae-init", 0))?;
    let cfg = FitConfig {
        batch_size: spec.batch_size,
        max_epochs: epochs,
        patience: None,
        adam,
        seed: derive_seed(seed, "ae-shuffle", 0),
    };
    nn::fit(
        init,
        (train.clone(), train.clone()),
        (val.clone(), val.clone()),
        &cfg,
    )
}

/// Trains every grid point for `config.search_epochs` and picks the lowest
/// validation reconstruction loss (earliest point on ties).
pub fn hyper_search(
    data: ArrayView2<'_, f64>,
    config: &PretrainConfig,
    seed: u64,
) -> Result<SearchResult> {
    let specs = config.grid.points(data.nrows());
    if specs.is_empty() {
        return Err(invalid(format!(
            "no valid autoencoder grid points for input width {}",
            data.nrows()
        )));
    }
    let (train, val) = holdout(data, config.validation_fraction, seed)?;
    let points: Vec<SearchPoint> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let sub = derive_seed(seed, "grid", i as u64);
            let val_loss =
                match train_autoencoder(spec, &train, &val, config.search_epochs, config.adam, sub)
                {
                    Ok((_, rec)) => rec.final_val_loss().unwrap_or(f64::INFINITY),
                    Err(e) => {
                        log::warn!("grid point {i} ({spec:?}) failed: {e}");
                        f64::INFINITY
                    }
                };
            SearchPoint {
                spec: *spec,
                val_loss,
            }
        })
        .collect();
    let mut chosen = 0;
    for (i, p) in points.iter().enumerate() {
        if p.val_loss < points[chosen].val_loss {
            chosen = i;
        }
    }
    if !points[chosen].val_loss.is_finite() {
        return Err(Error::NonFinite(
            "every autoencoder grid point diverged".into(),
        ));
    }
    Ok(SearchResult { points, chosen })
}

/// Output of the long pre-training run.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub encoder: EncoderParams,
    pub autoencoder: NetworkParams,
    pub record: TrainRecord,
}

/// Retrains `spec` from scratch for `config.final_epochs` and extracts the
/// encoder half.
pub fn pretrain_encoder(
    spec: &AutoencoderSpec,
    data: ArrayView2<'_, f64>,
    modality: Modality,
    config: &PretrainConfig,
    seed: u64,
) -> Result<Pretrained> {
    if data.nrows() != spec.input_dim {
        return Err(Error::Shape(format!(
            "data has {} features, autoencoder expects {}",
            data.nrows(),
            spec.input_dim
        )));
    }
    let (train, val) = holdout(data, config.validation_fraction, seed)?;
    let (autoencoder, record) =
        train_autoencoder(spec, &train, &val, config.final_epochs, config.adam, seed)?;
    let encoder = EncoderParams {
        modality,
        network: autoencoder.truncate(3)?,
    };
    Ok(Pretrained {
        encoder,
        autoencoder,
        record,
    })
}

/// Reconstruction MSE of an autoencoder on `data`.
pub fn reconstruction_mse(autoencoder: &NetworkParams, data: ArrayView2<'_, f64>) -> Result<f64> {
    let out = nn::predict(autoencoder, data)?;
    nn::loss_mse(out.view(), data)
}

/// SHA-256 of the pre-training settings, stored in encoder checkpoints.
pub fn pretrain_hash(spec: &AutoencoderSpec, config: &PretrainConfig) -> String {
    config_hash(&(spec, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn mirrored_dims() {
        let spec = AutoencoderSpec {
            input_dim: 100,
            l1: 32,
            l2: 16,
            l3: 8,
            batch_size: 16,
        };
        let p = build_autoencoder(&spec, 1).unwrap();
        assert_eq!(p.spec().dims(), vec![100, 32, 16, 8, 16, 32, 100]);
        let acts: Vec<_> = p.spec().layers.iter().map(|l| l.activation).collect();
        assert_eq!(acts[..5], [Activation::Relu; 5]);
        assert_eq!(acts[5], Activation::Linear);
    }

    #[test]
    fn rejects_non_narrowing_spec() {
        let spec = AutoencoderSpec {
            input_dim: 10,
            l1: 10,
            l2: 4,
            l3: 2,
            batch_size: 1,
        };
        assert!(build_autoencoder(&spec, 1).is_err());
    }

    #[test]
    fn paper_grid_has_54_points() {
        let grid = SearchGrid::default();
        assert_eq!(grid.cardinality(), 54);
        assert_eq!(grid.points(18_281).len(), 54);
        assert_eq!(grid.points(15_363).len(), 54);
    }

    #[test]
    fn grid_scales_for_small_inputs() {
        let pts = SearchGrid::default().points(200);
        // l1 -> {100}, l2 -> {50}, l3 -> {25, 16}, batch {128, 64}
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.validate().is_ok()));
        assert_eq!(
            (pts[0].l1, pts[0].l2, pts[0].l3, pts[0].batch_size),
            (100, 50, 25, 128)
        );
        assert_eq!((pts[3].l3, pts[3].batch_size), (16, 64));
    }

    #[test]
    fn encode_matches_bottleneck_activation() {
        let spec = AutoencoderSpec {
            input_dim: 12,
            l1: 8,
            l2: 6,
            l3: 3,
            batch_size: 4,
        };
        let ae = build_autoencoder(&spec, 2).unwrap();
        let enc = EncoderParams {
            modality: Modality::Expression,
            network: ae.truncate(3).unwrap(),
        };
        let mut r = rng::seeded(3);
        let x = Array2::from_shape_simple_fn((12, 5), || StandardNormal.sample(&mut r));
        let z = encode(&enc, x.view()).unwrap();
        let full = nn::forward(&ae, x.view()).unwrap();
        assert_eq!(z.dim(), (3, 5));
        for (a, b) in z.iter().zip(full.outputs[3].iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(z, encode(&enc, x.view()).unwrap());
        assert!(encode(&enc, x.slice(ndarray::s![..5, ..]).view()).is_err());
    }

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let spec = NetworkSpec::chain(&[5, 4, 3, 2], Activation::Relu).unwrap();
        let enc = EncoderParams {
            modality: Modality::Mutation,
            network: NetworkParams::zeros(&spec),
        };
        let z = encode(&enc, Array2::ones((5, 3)).view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_grid_is_chosen() {
        let mut r = rng::seeded(4);
        let data = Array2::from_shape_simple_fn((16, 40), || StandardNormal.sample(&mut r));
        let cfg = PretrainConfig {
            grid: SearchGrid {
                l1: vec![8],
                l2: vec![4],
                l3: vec![2],
                batch: vec![8],
            },
            search_epochs: 2,
            ..PretrainConfig::default()
        };
        let res = hyper_search(data.view(), &cfg, 1).unwrap();
        assert_eq!(res.points.len(), 1);
        assert_eq!(res.chosen, 0);
        assert!(res.to_tsv().lines().nth(1).unwrap().ends_with("\t1"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let enc = random_encoder([6, 4, 3, 2], Modality::Mutation, 9).unwrap();
        let genes: Vec<String> = (0..6).map(|i| format!("g{i}")).collect();
        let c = enc.to_checkpoint(&genes, 9, "h".into());
        let (back, g) =
            EncoderParams::from_checkpoint(&Checkpoint::from_json(&c.to_json()).unwrap()).unwrap();
        assert_eq!(back, enc);
        assert_eq!(g, genes);
    }
}
