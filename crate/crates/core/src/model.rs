//! Trained models and their JSON file format.
//!
//! A model file holds everything needed to reproduce predictions
//! bit-exactly: the network tensors (weights as row-major nested arrays),
//! batch-norm running statistics, the preprocessing statistics and the
//! training configuration. Floats are written with shortest round-trip
//! formatting, so a save/load cycle is lossless.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PreprocessStats;
use crate::diffmath::{BatchNormState, Matrix};
use crate::dist::{DistParams, Family};
use crate::error::{contract, Error, Result};
use crate::net::{Architecture, BayesNet, Dense, DistNet, PriorConfig};
use crate::rng;
use crate::train::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "distnet")]
    DistNet,
    #[serde(rename = "bayes")]
    Bayes,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::DistNet, ModelKind::Bayes];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DistNet => "distnet",
            ModelKind::Bayes => "bayes",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::DistNet => "DistNet",
            ModelKind::Bayes => "BayesDistNet",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distnet" => Ok(ModelKind::DistNet),
            "bayes" => Ok(ModelKind::Bayes),
            other => Err(contract(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    DistNet(DistNet),
    Bayes(BayesNet),
}

impl Network {
    pub fn kind(&self) -> ModelKind {
        match self {
            Network::DistNet(_) => ModelKind::DistNet,
            Network::Bayes(_) => ModelKind::Bayes,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Network::DistNet(n) => n.family,
            Network::Bayes(n) => n.family,
        }
    }

    pub fn arch(&self) -> &Architecture {
        match self {
            Network::DistNet(n) => &n.arch,
            Network::Bayes(n) => &n.arch,
        }
    }

    /// Predicted RTD per row of standardized features, in scaled time.
    /// The Bayes network draws its `mc_samples` passes from a stream fixed
    /// by `seed`, so repeated calls agree bit for bit.
    pub fn predict(&self, x: &Matrix, mc_samples: usize, seed: u64) -> Result<Vec<RtdPrediction>> {
        match self {
            Network::DistNet(n) => n
                .predict(x)?
                .into_iter()
                .map(|params| {
                    let q = [params.quantile(0.25)?, params.quantile(0.5)?, params.quantile(0.75)?];
                    Ok(RtdPrediction { params, quartiles: q, samples: Vec::new() })
                })
                .collect(),
            Network::Bayes(n) => {
                let mut r = rng::stream(seed, "predict", 0);
                Ok(n.predictive_rtd(x, mc_samples, &mut r)?
                    .into_iter()
                    .map(|p| RtdPrediction { params: p.params, quartiles: p.quartiles, samples: p.samples })
                    .collect())
            }
        }
    }
}

/// A predicted runtime distribution in scaled time.
#[derive(Clone, Debug, PartialEq)]
pub struct RtdPrediction {
    pub params: DistParams,
    /// 25/50/75% quantiles: of the output distribution for DistNet, of the
    /// raw Monte Carlo runtimes for Bayes DistNet.
    pub quartiles: [f64; 3],
    /// Raw Monte Carlo runtimes (empty for DistNet).
    pub samples: Vec<f64>,
}

impl RtdPrediction {
    /// The same prediction expressed in seconds.
    pub fn to_raw(&self, runtime_scale: f64) -> RtdPrediction {
        RtdPrediction {
            params: self.params.rescale(runtime_scale),
            quartiles: self.quartiles.map(|q| q * runtime_scale),
            samples: self.samples.iter().map(|s| s * runtime_scale).collect(),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.quartiles[2] - self.quartiles[0]
    }
}

/// How the training runs were prepared before fitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPrep {
    pub obs_per_instance: Option<usize>,
    pub censoring: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub stats: PreprocessStats,
    pub config: TrainConfig,
    pub prep: DataPrep,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.network.kind()
    }

    pub fn family(&self) -> Family {
        self.network.family()
    }

    pub fn input_dim(&self) -> usize {
        self.network.arch().input_dim
    }

    /// Predictions for already standardized features.
    pub fn predict_standardized(&self, x: &Matrix) -> Result<Vec<RtdPrediction>> {
        self.network.predict(x, self.config.mc_samples, self.config.seed)
    }

    /// Predictions for raw feature rows, in scaled time.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<RtdPrediction>> {
        let rows = features.iter().map(|f| self.stats.standardize(f)).collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(contract("no feature rows to predict"));
        }
        self.predict_standardized(&Matrix::from_rows(&rows))
    }

    pub fn to_file(&self) -> ModelFile {
        let network = match &self.network {
            Network::DistNet(n) => NetworkFile::DistNet {
                layers: n.layers.iter().map(LayerFile::from).collect(),
                batch_norm: n.batch_norm.clone(),
            },
            Network::Bayes(n) => NetworkFile::Bayes {
                prior: n.prior,
                mu: n.mu.iter().map(LayerFile::from).collect(),
                rho: n.rho.iter().map(LayerFile::from).collect(),
                batch_norm: n.batch_norm.clone(),
            },
        };
        ModelFile {
            schema_version: SCHEMA_VERSION,
            model_kind: self.kind(),
            family: self.family(),
            architecture: self.network.arch().clone(),
            network,
            preprocess: self.stats.clone(),
            train_config: self.config.clone(),
            data_prep: self.prep,
            seed: self.config.seed,
            best_epoch: self.best_epoch,
        }
    }

    pub fn from_file(f: ModelFile) -> Result<Self> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(contract(format!("unsupported model schema version {}", f.schema_version)));
        }
        f.architecture.validate()?;
        let shapes = f.architecture.layer_shapes();
        let layers = |ls: Vec<LayerFile>| -> Result<Vec<Dense>> {
            if ls.len() != shapes.len() {
                return Err(contract(format!("expected {} layers, found {}", shapes.len(), ls.len())));
            }
            ls.into_iter().zip(&shapes).map(|(l, &s)| l.into_dense(s)).collect()
        };
        let network = match (f.model_kind, f.network) {
            (ModelKind::DistNet, NetworkFile::DistNet { layers: ls, batch_norm }) => {
                Network::DistNet(DistNet { arch: f.architecture, family: f.family, layers: layers(ls)?, batch_norm })
            }
            (ModelKind::Bayes, NetworkFile::Bayes { prior, mu, rho, batch_norm }) => Network::Bayes(BayesNet {
                arch: f.architecture,
                family: f.family,
                prior,
                mu: layers(mu)?,
                rho: layers(rho)?,
                batch_norm,
            }),
            (kind, _) => return Err(contract(format!("network tensors do not match model kind '{kind}'"))),
        };
        Ok(Self { network, stats: f.preprocess, config: f.train_config, prep: f.data_prep, best_epoch: f.best_epoch })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_file())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// On-disk model representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    pub family: Family,
    pub architecture: Architecture,
    pub network: NetworkFile,
    pub preprocess: PreprocessStats,
    pub train_config: TrainConfig,
    pub data_prep: DataPrep,
    pub seed: u64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkFile {
    DistNet { layers: Vec<LayerFile>, batch_norm: Vec<BatchNormState> },
    Bayes { prior: PriorConfig, mu: Vec<LayerFile>, rho: Vec<LayerFile>, batch_norm: Vec<BatchNormState> },
}

/// A dense layer: `weight[i][j]` connects input `i` to output `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl From<&Dense> for LayerFile {
    fn from(d: &Dense) -> Self {
        Self { weight: d.weight.to_rows(), bias: d.bias.data().to_vec() }
    }
}

impl LayerFile {
    fn into_dense(self, (fan_in, fan_out): (usize, usize)) -> Result<Dense> {
        if self.weight.len() != fan_in || self.weight.iter().any(|r| r.len() != fan_out) || self.bias.len() != fan_out {
            return Err(contract(format!("layer tensors do not have shape {fan_in}x{fan_out}")));
        }
        Ok(Dense { weight: Matrix::from_rows(&self.weight), bias: Matrix::row_vector(self.bias) })
    }
}
