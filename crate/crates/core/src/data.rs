//! Runtime datasets: CSV ingestion, preprocessing, Type-I censoring,
//! subsampling, k-fold splits, and synthetic scenarios with known
//! ground truth.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffmath::special::{softplus, softplus_inv};
use crate::diffmath::Matrix;
use crate::dist::DistParams;
use crate::error::{contract, Error, Result};
use crate::loss::Observation;
use crate::rng;

pub const INSTANCES_FILE: &str = "instances.csv";
pub const RUNTIMES_FILE: &str = "runtimes.csv";
pub const TRUTH_FILE: &str = "truth.json";
/// Floor on a feature's standard deviation during standardization.
pub const MIN_FEATURE_STD: f64 = 1e-8;

/// One solver run on an instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub run_seed: u64,
    pub runtime: f64,
    pub censored: bool,
}

impl Run {
    pub fn observation(&self) -> Observation {
        Observation { runtime: self.runtime, observed: !self.censored }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
    pub runs: Vec<Run>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<Instance>,
}

fn load_err(file: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Load { file: file.display().to_string(), row, msg: msg.into() }
}

impl Dataset {
    /// Checks that every instance has the same feature count, at least one
    /// run, and only positive finite runtimes.
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        if let Some(first) = instances.first() {
            let m = first.features.len();
            for inst in &instances {
                if inst.features.len() != m {
                    return Err(contract(format!(
                        "instance {} has {} features, expected {m}",
                        inst.id,
                        inst.features.len()
                    )));
                }
                if inst.runs.is_empty() {
                    return Err(contract(format!("instance {} has no runs", inst.id)));
                }
                if let Some(r) = inst.runs.iter().find(|r| !(r.runtime > 0.0 && r.runtime.is_finite())) {
                    return Err(contract(format!("instance {} has runtime {}", inst.id, r.runtime)));
                }
            }
        }
        Ok(Self { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.instances.first().map_or(0, |i| i.features.len())
    }

    pub fn n_runs(&self) -> usize {
        self.instances.iter().map(|i| i.runs.len()).sum()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { instances: idx.iter().map(|&i| self.instances[i].clone()).collect() }
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.id == id)
    }

    /// One row per run: the instance's features, its observation, and the
    /// instance index.
    pub fn rows(&self) -> (Matrix, Vec<Observation>, Vec<usize>) {
        let m = self.n_features();
        let mut x = Vec::with_capacity(self.n_runs() * m);
        let mut obs = Vec::with_capacity(self.n_runs());
        let mut owner = Vec::with_capacity(self.n_runs());
        for (k, inst) in self.instances.iter().enumerate() {
            for r in &inst.runs {
                x.extend_from_slice(&inst.features);
                obs.push(r.observation());
                owner.push(k);
            }
        }
        (Matrix::from_vec(obs.len(), m, x), obs, owner)
    }

    /// One row per instance.
    pub fn feature_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.instances.iter().map(|i| i.features.clone()).collect::<Vec<_>>())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_files(&dir.join(INSTANCES_FILE), &dir.join(RUNTIMES_FILE))
    }

    pub fn load_files(instances_path: &Path, runtimes_path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(instances_path)?;
        let header = reader.headers()?.clone();
        if header.get(0) != Some("id") {
            return Err(load_err(instances_path, 1, "header must start with 'id'"));
        }
        let m = header.len() - 1;
        let mut instances = Vec::new();
        let mut by_id = HashMap::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            if rec.len() != m + 1 {
                return Err(load_err(instances_path, row, format!("expected {} fields, found {}", m + 1, rec.len())));
            }
            let id = rec[0].to_string();
            let features = rec
                .iter()
                .skip(1)
                .map(|f| f.trim().parse::<f64>().map_err(|e| load_err(instances_path, row, format!("'{f}': {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if by_id.insert(id.clone(), instances.len()).is_some() {
                return Err(load_err(instances_path, row, format!("duplicate instance id '{id}'")));
            }
            instances.push(Instance { id, features, runs: Vec::new() });
        }

        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(runtimes_path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != ["instance_id", "run_seed", "runtime", "censored"] {
            return Err(load_err(runtimes_path, 1, "header must be instance_id,run_seed,runtime,censored"));
        }
        for (i, rec) in reader.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            if rec.len() != 4 {
                return Err(load_err(runtimes_path, row, format!("expected 4 fields, found {}", rec.len())));
            }
            let k = *by_id
                .get(&rec[0])
                .ok_or_else(|| load_err(runtimes_path, row, format!("unknown instance id '{}'", &rec[0])))?;
            let run_seed =
                rec[1].trim().parse::<u64>().map_err(|e| load_err(runtimes_path, row, format!("run_seed: {e}")))?;
            let runtime =
                rec[2].trim().parse::<f64>().map_err(|e| load_err(runtimes_path, row, format!("runtime: {e}")))?;
            if !(runtime > 0.0 && runtime.is_finite()) {
                return Err(load_err(runtimes_path, row, format!("runtime must be positive, got {runtime}")));
            }
            let censored = match rec[3].trim() {
                "0" => false,
                "1" => true,
                other => return Err(load_err(runtimes_path, row, format!("censored must be 0 or 1, got '{other}'"))),
            };
            instances[k].runs.push(Run { run_seed, runtime, censored });
        }
        if let Some(empty) = instances.iter().find(|i| i.runs.is_empty()) {
            return Err(load_err(runtimes_path, 0, format!("instance '{}' has no runtimes", empty.id)));
        }
        Self::new(instances)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(INSTANCES_FILE))?;
        let mut header = vec!["id".to_string()];
        header.extend((1..=self.n_features()).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut rec = vec![inst.id.clone()];
            rec.extend(inst.features.iter().map(|f| f.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(RUNTIMES_FILE))?;
        w.write_record(["instance_id", "run_seed", "runtime", "censored"])?;
        for inst in &self.instances {
            for r in &inst.runs {
                w.write_record([
                    inst.id.clone(),
                    r.run_seed.to_string(),
                    r.runtime.to_string(),
                    if r.censored { "1" } else { "0" }.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Feature standardization and runtime scaling fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub runtime_scale: f64,
}

impl PreprocessStats {
    /// Means and population standard deviations over instances; the
    /// runtime scale is the largest training runtime.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(contract("cannot preprocess an empty training split"));
        }
        let n = train.len() as f64;
        let m = train.n_features();
        let mut means = vec![0.0; m];
        for inst in &train.instances {
            for (s, f) in means.iter_mut().zip(&inst.features) {
                *s += f;
            }
        }
        means.iter_mut().for_each(|s| *s /= n);
        let mut stds = vec![0.0; m];
        for inst in &train.instances {
            for ((s, f), mu) in stds.iter_mut().zip(&inst.features).zip(&means) {
                *s += (f - mu) * (f - mu);
            }
        }
        stds.iter_mut().for_each(|s| *s = (*s / n).sqrt().max(MIN_FEATURE_STD));
        let runtime_scale = train.instances.iter().flat_map(|i| i.runs.iter().map(|r| r.runtime)).fold(0.0, f64::max);
        Ok(Self { feature_means: means, feature_stds: stds, runtime_scale })
    }

    pub fn standardize(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_means.len() {
            return Err(contract(format!("expected {} features, got {}", self.feature_means.len(), features.len())));
        }
        Ok(features.iter().zip(&self.feature_means).zip(&self.feature_stds).map(|((f, m), s)| (f - m) / s).collect())
    }

    pub fn scale_runtime(&self, t: f64) -> f64 {
        t / self.runtime_scale
    }

    pub fn unscale_runtime(&self, t: f64) -> f64 {
        t * self.runtime_scale
    }

    /// Standardized features and scaled runtimes.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let instances = ds
            .instances
            .iter()
            .map(|inst| {
                Ok(Instance {
                    id: inst.id.clone(),
                    features: self.standardize(&inst.features)?,
                    runs: inst.runs.iter().map(|r| Run { runtime: self.scale_runtime(r.runtime), ..*r }).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { instances })
    }
}

/// Fits [`PreprocessStats`] on `train` and applies them to it.
pub fn preprocess(train: &Dataset) -> Result<(PreprocessStats, Dataset)> {
    let stats = PreprocessStats::fit(train)?;
    let out = stats.apply(train)?;
    Ok((stats, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringSpec {
    pub level: f64,
    pub cutoff: f64,
    pub u: usize,
    pub total: usize,
    pub censored: usize,
}

/// Type-I censoring at the u-th fastest pooled runtime, u = ⌊N(1 − c)⌋.
/// Runtimes strictly above the cutoff are replaced by it and flagged.
pub fn apply_censoring(ds: &Dataset, level: f64) -> Result<(Dataset, CensoringSpec)> {
    if !(0.0..1.0).contains(&level) {
        return Err(contract(format!("censoring level must lie in [0,1), got {level}")));
    }
    let mut all: Vec<f64> = ds.instances.iter().flat_map(|i| i.runs.iter().map(|r| r.runtime)).collect();
    let total = all.len();
    // the nudge keeps e.g. 10·0.65 from flooring to 6 when it rounds to 6.4999…
    let u = (total as f64 * (1.0 - level) + 1e-9).floor() as usize;
    if u == 0 {
        return Err(contract(format!("censoring level {level} leaves no uncensored runs out of {total}")));
    }
    all.sort_by(f64::total_cmp);
    let cutoff = all[u - 1];
    let mut censored = 0;
    let instances = ds
        .instances
        .iter()
        .map(|inst| Instance {
            id: inst.id.clone(),
            features: inst.features.clone(),
            runs: inst
                .runs
                .iter()
                .map(|r| {
                    let cut = r.runtime > cutoff;
                    censored += usize::from(cut || r.censored);
                    Run { run_seed: r.run_seed, runtime: r.runtime.min(cutoff), censored: cut || r.censored }
                })
                .collect(),
        })
        .collect();
    Ok((Dataset { instances }, CensoringSpec { level, cutoff, u, total, censored }))
}

/// Keeps a uniform random subset of at most `per_instance` runs of every
/// instance, in their original order.
pub fn subsample_observations<R: Rng + ?Sized>(ds: &Dataset, per_instance: usize, rng: &mut R) -> Result<Dataset> {
    if per_instance == 0 {
        return Err(contract("per_instance must be at least 1"));
    }
    let instances = ds
        .instances
        .iter()
        .map(|inst| {
            let runs = if inst.runs.len() <= per_instance {
                inst.runs.clone()
            } else {
                let mut keep = index::sample(rng, inst.runs.len(), per_instance).into_vec();
                keep.sort_unstable();
                keep.into_iter().map(|k| inst.runs[k]).collect()
            };
            Instance { id: inst.id.clone(), features: inst.features.clone(), runs }
        })
        .collect();
    Ok(Dataset { instances })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions instance indices `0..n` into `folds` shuffled test folds
/// whose sizes differ by at most one.
pub fn kfold<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Result<Vec<Fold>> {
    if folds < 2 || n < folds {
        return Err(contract(format!("cannot split {n} instances into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok((0..folds)
        .map(|f| {
            let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
            let mut test = order[lo..hi].to_vec();
            let mut train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            test.sort_unstable();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect())
}

/// Splits `indices` into `(kept, held_out)` with `held_out` holding
/// `round(fraction · len)` entries, at least one, and `kept` at least one.
pub fn holdout_split<R: Rng + ?Sized>(
    indices: &[usize],
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if indices.len() < 2 {
        return Err(contract(format!("need at least 2 instances for a holdout split, got {}", indices.len())));
    }
    let k = ((indices.len() as f64 * fraction).round() as usize).clamp(1, indices.len() - 1);
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let mut held = order[..k].to_vec();
    let mut kept = order[k..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    Ok((kept, held))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "lognormal-synth")]
    LognormalSynth,
    #[serde(rename = "invgauss-synth")]
    InvGaussSynth,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::LognormalSynth => "lognormal-synth",
            Scenario::InvGaussSynth => "invgauss-synth",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lognormal-synth" => Ok(Scenario::LognormalSynth),
            "invgauss-synth" => Ok(Scenario::InvGaussSynth),
            other => Err(contract(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Ground-truth runtime distribution of one synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub id: String,
    pub params: DistParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub seed: u64,
    pub instances: Vec<TruthEntry>,
}

impl Truth {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Spread of the location map a·x across instances.
const SYNTH_LOCATION_STD: f64 = 1.0;
/// Spread of the shape map c·x across instances.
const SYNTH_SHAPE_STD: f64 = 0.3;
/// Typical lognormal σ.
const SYNTH_SIGMA: f64 = 0.5;

/// Draws `n_instances` instances with N(0, I) features and runtimes from a
/// family whose parameters are fixed random affine maps of the features:
/// lognormal μ = a·x + b, σ = softplus(c·x + d); inverse Gaussian
/// mean = softplus(a·x + b), λ = 10·softplus(c·x + d).
pub fn generate_synthetic(
    scenario: Scenario,
    n_instances: usize,
    k_obs: usize,
    m_features: usize,
    seed: u64,
) -> Result<(Dataset, Truth)> {
    if n_instances == 0 || k_obs == 0 || m_features == 0 {
        return Err(contract("instance, observation and feature counts must all be at least 1"));
    }
    let mut maps = rng::stream(seed, "synth-maps", 0);
    let scale = 1.0 / (m_features as f64).sqrt();
    let draw = |rng: &mut rng::Rng, std: f64| -> Vec<f64> {
        let n = Normal::new(0.0, std).expect("valid std");
        (0..m_features).map(|_| n.sample(rng)).collect()
    };
    let a = draw(&mut maps, SYNTH_LOCATION_STD * scale);
    let c = draw(&mut maps, SYNTH_SHAPE_STD * scale);
    let (b, d) = match scenario {
        Scenario::LognormalSynth => (0.0, softplus_inv(SYNTH_SIGMA)),
        Scenario::InvGaussSynth => (softplus_inv(1.0), softplus_inv(1.0)),
    };
    let dot = |w: &[f64], x: &[f64]| w.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();

    let mut instances = Vec::with_capacity(n_instances);
    let mut truth = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let mut fr = rng::stream(seed, "synth-features", i as u64);
        let features: Vec<f64> = (0..m_features).map(|_| fr.sample(StandardNormal)).collect();
        let params = match scenario {
            Scenario::LognormalSynth => {
                DistParams::lognormal(dot(&a, &features) + b, softplus(dot(&c, &features) + d))?
            }
            Scenario::InvGaussSynth => {
                DistParams::inverse_gaussian(softplus(dot(&a, &features) + b), 10.0 * softplus(dot(&c, &features) + d))?
            }
        };
        let mut rr = rng::stream(seed, "synth-runtimes", i as u64);
        let runs = (0..k_obs)
            .map(|s| Run { run_seed: s as u64, runtime: params.sample_one(&mut rr), censored: false })
            .collect();
        let id = format!("inst{i:04}");
        truth.push(TruthEntry { id: id.clone(), params });
        instances.push(Instance { id, features, runs });
    }
    Ok((Dataset::new(instances)?, Truth { scenario, seed, instances: truth }))
}

/// Writes the dataset files and `truth.json` into `dir`.
pub fn write_synthetic(dir: &Path, ds: &Dataset, truth: &Truth) -> Result<()> {
    ds.save(dir)?;
    truth.save(&dir.join(TRUTH_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{mle, Family};

    fn toy(runtimes: &[&[f64]]) -> Dataset {
        Dataset::new(
            runtimes
                .iter()
                .enumerate()
                .map(|(i, ts)| Instance {
                    id: format!("i{i}"),
                    features: vec![i as f64, 1.0],
                    runs: ts
                        .iter()
                        .enumerate()
                        .map(|(s, &t)| Run { run_seed: s as u64, runtime: t, censored: false })
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn censoring_hand_case() {
        let ds = toy(&[&[3.0, 9.0, 1.0, 10.0, 6.0], &[2.0, 8.0, 4.0, 7.0, 5.0]]);
        let (out, spec) = apply_censoring(&ds, 0.35).unwrap();
        assert_eq!((spec.u, spec.cutoff, spec.censored), (6, 6.0, 4));
        for r in out.instances.iter().flat_map(|i| &i.runs) {
            assert!(r.runtime <= 6.0);
            assert_eq!(r.censored, r.runtime == 6.0 && r.run_seed != 4);
        }
    }

    #[test]
    fn censoring_levels() {
        let ts: Vec<f64> = (1..=100).map(f64::from).collect();
        let ds = toy(&[&ts]);
        let (_, spec) = apply_censoring(&ds, 0.2).unwrap();
        assert_eq!((spec.u, spec.cutoff, spec.censored), (80, 80.0, 20));
        let (out, spec) = apply_censoring(&ds, 0.0).unwrap();
        assert_eq!((spec.u, spec.cutoff, spec.censored), (100, 100.0, 0));
        assert_eq!(out, ds);
        assert!(apply_censoring(&toy(&[&[1.0]]), 0.5).is_err());
        assert!(apply_censoring(&ds, 1.0).is_err());
    }

    #[test]
    fn preprocessing_reference_values() {
        let ds = Dataset::new(vec![
            Instance {
                id: "a".into(),
                features: vec![1.0, 5.0],
                runs: vec![Run { run_seed: 0, runtime: 50.0, censored: false }],
            },
            Instance {
                id: "b".into(),
                features: vec![3.0, 5.0],
                runs: vec![Run { run_seed: 0, runtime: 10.0, censored: false }],
            },
        ])
        .unwrap();
        let (stats, out) = preprocess(&ds).unwrap();
        assert_eq!(out.instances[0].features[0], -1.0);
        assert_eq!(out.instances[1].features[0], 1.0);
        assert_eq!(stats.feature_stds[1], MIN_FEATURE_STD);
        assert_eq!(stats.runtime_scale, 50.0);
        assert_eq!(out.instances[0].runs[0].runtime, 1.0);
        assert_eq!(stats.scale_runtime(75.0), 1.5);
        let t = 0.123_456_789;
        assert!((stats.scale_runtime(stats.unscale_runtime(t)) - t).abs() < 1e-12);
    }

    #[test]
    fn subsample_counts() {
        let (ds, _) = generate_synthetic(Scenario::LognormalSynth, 5, 100, 3, 1).unwrap();
        let mut r = rng::stream(1, "sub", 0);
        assert_eq!(subsample_observations(&ds, 100, &mut r).unwrap(), ds);
        let one = subsample_observations(&ds, 1, &mut r).unwrap();
        assert!(one.instances.iter().all(|i| i.runs.len() == 1));
        let a = subsample_observations(&ds, 8, &mut rng::stream(2, "sub", 0)).unwrap();
        let b = subsample_observations(&ds, 8, &mut rng::stream(2, "sub", 0)).unwrap();
        assert_eq!(a, b);
        assert!(subsample_observations(&ds, 0, &mut r).is_err());
    }

    #[test]
    fn kfold_partitions() {
        let folds = kfold(20, 10, &mut rng::stream(0, "k", 0)).unwrap();
        let mut seen = [0; 20];
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.train.len(), 18);
            f.test.iter().for_each(|&i| seen[i] += 1);
            assert!(f.test.iter().all(|i| !f.train.contains(i)));
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, kfold(20, 10, &mut rng::stream(0, "k", 0)).unwrap());
        assert!(kfold(9, 10, &mut rng::stream(0, "k", 0)).is_err());
    }

    #[test]
    fn holdout_sizes() {
        let idx: Vec<usize> = (0..45).collect();
        let (kept, held) = holdout_split(&idx, 0.1, &mut rng::stream(0, "h", 0)).unwrap();
        assert_eq!((kept.len(), held.len()), (40, 5));
        let (kept, held) = holdout_split(&[3, 4], 0.1, &mut rng::stream(0, "h", 0)).unwrap();
        assert_eq!((kept.len(), held.len()), (1, 1));
    }

    #[test]
    fn synthetic_is_seeded_and_consistent() {
        let (a, ta) = generate_synthetic(Scenario::InvGaussSynth, 10, 20, 4, 7).unwrap();
        let (b, tb) = generate_synthetic(Scenario::InvGaussSynth, 10, 20, 4, 7).unwrap();
        assert_eq!((a.clone(), ta.clone()), (b, tb));
        assert_eq!(a.n_runs(), 200);
        assert!(a.instances.iter().flat_map(|i| &i.runs).all(|r| r.runtime > 0.0));

        let (ds, truth) = generate_synthetic(Scenario::LognormalSynth, 40, 1000, 10, 3).unwrap();
        let close = ds
            .instances
            .iter()
            .zip(&truth.instances)
            .filter(|(inst, t)| {
                let ts: Vec<f64> = inst.runs.iter().map(|r| r.runtime).collect();
                (mle(Family::Lognormal, &ts).unwrap().beta()[0] - t.params.beta()[0]).abs() < 0.1
            })
            .count();
        assert!(close as f64 >= 0.95 * 40.0, "{close}");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, truth) = generate_synthetic(Scenario::LognormalSynth, 6, 5, 3, 11).unwrap();
        write_synthetic(dir.path(), &ds, &truth).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
        assert_eq!(Truth::load(&dir.path().join(TRUTH_FILE)).unwrap(), truth);
    }

    #[test]
    fn load_fixture_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(p.join(INSTANCES_FILE), "id,f1,f2\na,1.5,-2\nb,0,0.25\nc,3,4\n").unwrap();
        fs::write(
            p.join(RUNTIMES_FILE),
            "instance_id,run_seed,runtime,censored\na,0,1.25,0\nb,3,7,1\nc,1,0.5,0\na,1,2,0\n",
        )
        .unwrap();
        let ds = Dataset::load(p).unwrap();
        assert_eq!(ds.instances[0].features, vec![1.5, -2.0]);
        assert_eq!(ds.instances[0].runs.len(), 2);
        assert_eq!(ds.instances[1].runs[0], Run { run_seed: 3, runtime: 7.0, censored: true });
        assert_eq!(ds.instances[2].runs[0].runtime, 0.5);

        let bad = |runtimes: &str, instances: &str| {
            fs::write(p.join(INSTANCES_FILE), instances).unwrap();
            fs::write(p.join(RUNTIMES_FILE), format!("instance_id,run_seed,runtime,censored\n{runtimes}")).unwrap();
            Dataset::load(p).unwrap_err()
        };
        let ok_inst = "id,f1\na,1\nb,2\n";
        assert!(matches!(bad("a,0,1,0\nz,0,1,0\nb,0,1,0\n", ok_inst), Error::Load { row: 3, .. }));
        assert!(matches!(bad("a,0,1,0\nb,0,-1,0\n", ok_inst), Error::Load { row: 3, .. }));
        assert!(matches!(bad("a,0,1,0\n", ok_inst), Error::Load { .. }));
        assert!(matches!(bad("a,0,1,0\nb,0,1,0\n", "id,f1\na,1\nb,2,3\n"), Error::Load { row: 3, .. }));
    }
}
