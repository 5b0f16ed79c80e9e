//! JSON checkpoints. Tensors are stored as base64 of little-endian f64
//! values in row-major order, so parameters round-trip bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Activation, DenseLayer, LayerSpec, NetworkParams, NetworkSpec};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weight: String,
    pub bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layers: Vec<LayerRecord>,
}

/// A named set of networks plus the labels needed to use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub networks: BTreeMap<String, NetworkRecord>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
}

fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_f64(s: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| Error::Data(format!("{what}: invalid base64: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Data(format!(
            "{what}: expected {expected} values, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl NetworkRecord {
    pub fn from_params(p: &NetworkParams) -> Self {
        let layers = p
            .spec()
            .layers
            .iter()
            .zip(p.layers())
            .map(|(s, l)| LayerRecord {
                in_dim: s.in_dim,
                out_dim: s.out_dim,
                activation: s.activation,
                weight: encode_f64(l.weight.as_slice().expect("standard layout")),
                bias: encode_f64(l.bias.as_slice().expect("standard layout")),
            })
            .collect();
        Self { layers }
    }

    pub fn to_params(&self) -> Result<NetworkParams> {
        let spec = NetworkSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    activation: l.activation,
                })
                .collect(),
        };
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let w = decode_f64(
                    &l.weight,
                    l.in_dim * l.out_dim,
                    &format!("layer {i} weight"),
                )?;
                let b = decode_f64(&l.bias, l.out_dim, &format!("layer {i} bias"))?;
                Ok(DenseLayer {
                    weight: Array2::from_shape_vec((l.out_dim, l.in_dim), w)
                        .map_err(|e| Error::Shape(e.to_string()))?,
                    bias: Array1::from(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkParams::new(spec, layers)
    }
}

/// Hex SHA-256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

impl Checkpoint {
    pub fn new(kind: &str, seed: u64, config_hash: String) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            seed,
            config_hash,
            networks: BTreeMap::new(),
            tags: BTreeMap::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_network(mut self, name: &str, params: &NetworkParams) -> Self {
        self.networks
            .insert(name.to_string(), NetworkRecord::from_params(params));
        self
    }

    pub fn network(&self, name: &str) -> Result<NetworkParams> {
        self.networks
            .get(name)
            .ok_or_else(|| Error::Data(format!("checkpoint has no network '{name}'")))?
            .to_params()
    }

    pub fn label(&self, name: &str) -> Result<&[String]> {
        self.labels
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("checkpoint has no label list '{name}'")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format version {}",
                c.format_version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::io::write_string(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::init_he_uniform;
    use crate::nn::Parameters;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::chain(&[7, 5, 2], Activation::Linear).unwrap();
        let mut p = init_he_uniform(&spec, 11).unwrap();
        p.tensors_mut()[1][0] = -0.0;
        p.tensors_mut()[3][1] = f64::MIN_POSITIVE;
        let c = Checkpoint::new("network", 11, config_hash(&"cfg")).with_network("net", &p);
        let back = Checkpoint::from_json(&c.to_json())
            .unwrap()
            .network("net")
            .unwrap();
        for (a, b) in p.tensors().iter().zip(back.tensors()) {
            let ab: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(back.spec(), p.spec());
    }

    #[test]
    fn rejects_truncated_tensor() {
        let spec = NetworkSpec::chain(&[2, 1], Activation::Linear).unwrap();
        let p = init_he_uniform(&spec, 1).unwrap();
        let mut rec = NetworkRecord::from_params(&p);
        rec.layers[0].weight = encode_f64(&[1.0]);
        assert!(rec.to_params().is_err());
    }

    #[test]
    fn rejects_unknown_version() {
        let mut c = Checkpoint::new("network", 0, String::new());
        c.format_version = 99;
        assert!(Checkpoint::from_json(&c.to_json()).is_err());
    }
}
