//! Minibatch SGD with global-norm clipping, an exponentially decaying
//! learning rate, and early stopping on validation NLLH.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_censoring, holdout_split, preprocess, subsample_observations, CensoringSpec, Dataset, PreprocessStats,
};
use crate::diffmath::{Matrix, Tape};
use crate::dist::Family;
use crate::error::{contract, Error, Result};
use crate::loss::{bayes_loss, censored_loglik, distnet_loss, ComplexityNorm, LossParts, Observation};
use crate::model::{DataPrep, ModelKind, Network, TrainedModel};
use crate::net::{BayesNet, DistNet, PriorConfig, WeightNoise, DEFAULT_MC_SAMPLES};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate_start: f64,
    pub learning_rate_end: f64,
    pub decay_epochs: usize,
    pub l2: f64,
    pub grad_clip: f64,
    pub mc_samples: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub complexity_norm: ComplexityNorm,
    pub prior: PriorConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate_start: 1e-3,
            learning_rate_end: 1e-5,
            decay_epochs: 500,
            l2: 1e-4,
            grad_clip: 1e-2,
            mc_samples: DEFAULT_MC_SAMPLES,
            batch_size: 128,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.1,
            complexity_norm: ComplexityNorm::Mean,
            prior: PriorConfig::default(),
            seed: 0,
        }
    }
}

/// Gradient-norm clip used by [`TrainConfig::desk`].
pub const DESK_GRAD_CLIP: f64 = 100.0;

impl TrainConfig {
    /// Defaults with a looser clip. Losses are summed over the batch, so
    /// on corpora of a few thousand rows a 1e-2 clip caps every step at
    /// `lr * 1e-2` and the network barely leaves its initialization.
    pub fn desk() -> Self {
        Self { grad_clip: DESK_GRAD_CLIP, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate_start, self.learning_rate_end, self.grad_clip];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.learning_rate_end > self.learning_rate_start {
            return Err(contract(format!(
                "learning rates and clip must be positive with end <= start, got {} -> {}, clip {}",
                self.learning_rate_start, self.learning_rate_end, self.grad_clip
            )));
        }
        if !(self.l2 >= 0.0) {
            return Err(contract(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if self.mc_samples < 2 || self.batch_size < 2 || self.max_epochs == 0 || self.decay_epochs == 0 {
            return Err(contract("mc_samples and batch_size must be >= 2; max_epochs and decay_epochs >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(contract(format!("validation_fraction must lie in (0,1), got {}", self.validation_fraction)));
        }
        self.prior.validate()
    }
}

/// start · (end/start)^(min(epoch, decay_epochs)/decay_epochs)
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let frac = epoch.min(cfg.decay_epochs) as f64 / cfg.decay_epochs as f64;
    cfg.learning_rate_start * (cfg.learning_rate_end / cfg.learning_rate_start).powf(frac)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    pub applied_norm: f64,
}

/// Rescales the gradients to global norm at most `clip`, then applies
/// `p ← p − lr·g`. A non-finite gradient leaves every parameter untouched.
pub fn sgd_step(params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64, clip: f64) -> Result<StepStats> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(contract("parameter and gradient shapes differ"));
    }
    let sq: f64 = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum();
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient norm {norm}")));
    }
    let factor = if norm > clip { clip / norm } else { 1.0 };
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi -= lr * (gi * factor);
        }
    }
    Ok(StepStats { grad_norm: norm, applied_norm: norm * factor })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nllh: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub network: Network,
    pub best_epoch: usize,
    pub best_val_nllh: f64,
    pub curve: Vec<EpochRecord>,
    /// Rows where the survival floor engaged, over all steps.
    pub floor_hits: usize,
    /// Largest post-clip gradient norm seen.
    pub max_applied_norm: f64,
}

impl FitOutcome {
    pub fn into_model(self, stats: PreprocessStats, config: TrainConfig, prep: DataPrep) -> TrainedModel {
        TrainedModel { network: self.network, stats, config, prep, best_epoch: self.best_epoch }
    }
}

/// Mean censored NLLH of `ds` under the network's eval-mode predictions.
pub fn mean_nllh(network: &Network, ds: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    let preds = network.predict(&ds.feature_matrix(), cfg.mc_samples, rng_seed(cfg, "validation"))?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (inst, pred) in ds.instances.iter().zip(&preds) {
        for r in &inst.runs {
            total -= censored_loglik(&pred.params, &r.observation())?;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

fn rng_seed(cfg: &TrainConfig, label: &str) -> u64 {
    use rand::Rng as _;
    rng::stream(cfg.seed, label, 0).random()
}

/// Minibatch boundaries over `n` shuffled rows; a trailing batch of one
/// row is folded into the previous batch because batch norm needs two.
fn batches(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size).map(|s| (s, (s + size).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().expect("checked");
        out.last_mut().expect("checked").1 = e;
    }
    out
}

/// Trains a network on preprocessed `train` rows, selecting the epoch with
/// the lowest validation NLLH on `val`.
pub fn fit(kind: ModelKind, family: Family, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || train.n_runs() < 2 {
        return Err(contract("training needs at least 2 observations"));
    }
    if val.is_empty() {
        return Err(contract("empty validation split"));
    }
    let m = train.n_features();
    if val.n_features() != m {
        return Err(contract("train and validation feature counts differ"));
    }
    let mut init_rng = rng::stream(cfg.seed, "init", 0);
    let mut network = match kind {
        ModelKind::DistNet => Network::DistNet(DistNet::init(m, family, &mut init_rng)?),
        ModelKind::Bayes => Network::Bayes(BayesNet::init(m, family, cfg.prior, &mut init_rng)?),
    };
    let (x_all, obs_all, _) = train.rows();
    let mut order: Vec<usize> = (0..obs_all.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle", 0);
    let mut noise_rng = rng::stream(cfg.seed, "noise", 0);

    let mut best = (network.clone(), 0usize, mean_nllh(&network, val, cfg)?);
    let mut curve = Vec::new();
    let mut since_best = 0;
    let mut floor_hits = 0;
    let mut max_applied: f64 = 0.0;

    for epoch in 1..=cfg.max_epochs {
        let lr = lr_schedule(epoch - 1, cfg);
        order.shuffle(&mut shuffle_rng);
        let spans = batches(order.len(), cfg.batch_size);
        let kl_weight = 1.0 / spans.len() as f64;
        let mut epoch_loss = 0.0;
        for (bi, &(s, e)) in spans.iter().enumerate() {
            let idx = &order[s..e];
            let x = x_all.select_rows(idx);
            let obs: Vec<Observation> = idx.iter().map(|&i| obs_all[i]).collect();
            let (parts, stats) = match &mut network {
                Network::DistNet(net) => step_distnet(net, &x, &obs, lr, cfg),
                Network::Bayes(net) => {
                    let noise: Vec<WeightNoise> = (0..cfg.mc_samples).map(|_| net.draw_noise(&mut noise_rng)).collect();
                    step_bayes(net, &x, &obs, &noise, kl_weight, lr, cfg)
                }
            }
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, batch {bi}: {msg}")),
                other => other,
            })?;
            floor_hits += parts.1;
            max_applied = max_applied.max(stats.applied_norm);
            epoch_loss += parts.0;
        }
        let val_nllh = mean_nllh(&network, val, cfg)?;
        curve.push(EpochRecord { epoch, train_loss: epoch_loss / order.len() as f64, val_nllh, lr });
        if val_nllh < best.2 {
            best = (network.clone(), epoch, val_nllh);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(FitOutcome {
        network: best.0,
        best_epoch: best.1,
        best_val_nllh: best.2,
        curve,
        floor_hits,
        max_applied_norm: max_applied,
    })
}

type StepResult = Result<((f64, usize), StepStats)>;

fn check_loss(tape: &Tape, parts: &LossParts) -> Result<f64> {
    let v = tape.scalar_value(parts.total);
    if !v.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss {v} (data {}, complexity {}, l2 {})",
            parts.data, parts.complexity, parts.l2
        )));
    }
    Ok(v)
}

fn step_distnet(net: &mut DistNet, x: &Matrix, obs: &[Observation], lr: f64, cfg: &TrainConfig) -> StepResult {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let parts = distnet_loss(net, &mut tape, &bound, xv, obs, cfg.l2, true)?;
    let loss = check_loss(&tape, &parts)?;
    tape.backward(parts.total)?;
    let grads: Vec<Vec<f64>> = bound.vars().iter().map(|&v| grad_of(&tape, v)).collect();
    let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    let stats = sgd_step(&mut net.tensors_mut(), &grad_refs, lr, cfg.grad_clip);
    stats.map(|s| ((loss, parts.floor_hits), s))
}

fn step_bayes(
    net: &mut BayesNet,
    x: &Matrix,
    obs: &[Observation],
    noise: &[WeightNoise],
    kl_weight: f64,
    lr: f64,
    cfg: &TrainConfig,
) -> StepResult {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let parts = bayes_loss(net, &mut tape, &bound, xv, obs, noise, kl_weight, cfg.complexity_norm, cfg.l2, true)?;
    let loss = check_loss(&tape, &parts)?;
    tape.backward(parts.total)?;
    let grads: Vec<Vec<f64>> = bound.vars().iter().map(|&v| grad_of(&tape, v)).collect();
    let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    let stats = sgd_step(&mut net.tensors_mut(), &grad_refs, lr, cfg.grad_clip);
    stats.map(|s| ((loss, parts.floor_hits), s))
}

fn grad_of(tape: &Tape, v: crate::diffmath::Var) -> Vec<f64> {
    match tape.grad(v) {
        Some(g) => g.data().to_vec(),
        None => vec![0.0; tape.value(v).len()],
    }
}

/// Writes `epoch,train_loss,val_nllh,lr`.
pub fn write_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_nllh", "lr"])?;
    for r in curve {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_nllh.to_string(), r.lr.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// How raw training instances are turned into a fitted model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pipeline {
    pub kind: ModelKind,
    pub family: Family,
    /// Keep at most this many runs per training instance.
    pub obs_per_instance: Option<usize>,
    pub censoring: f64,
}

impl Pipeline {
    pub fn prep(&self) -> DataPrep {
        DataPrep { obs_per_instance: self.obs_per_instance, censoring: self.censoring }
    }
}

/// The result of [`train_model`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: TrainedModel,
    pub curve: Vec<EpochRecord>,
    pub censoring: CensoringSpec,
    pub floor_hits: usize,
}

/// Subsample → censor → split off validation instances → preprocess →
/// fit. `raw` holds training instances in seconds; every random choice is
/// drawn from streams keyed by `cfg.seed`.
pub fn train_model(raw: &Dataset, pipeline: &Pipeline, cfg: &TrainConfig) -> Result<Trained> {
    let sub = match pipeline.obs_per_instance {
        Some(k) => subsample_observations(raw, k, &mut rng::stream(cfg.seed, "subsample", 0))?,
        None => raw.clone(),
    };
    let (censored, spec) = apply_censoring(&sub, pipeline.censoring)?;
    let all: Vec<usize> = (0..censored.len()).collect();
    let (fit_idx, val_idx) = holdout_split(&all, cfg.validation_fraction, &mut rng::stream(cfg.seed, "holdout", 0))?;
    let (stats, train) = preprocess(&censored.subset(&fit_idx))?;
    let val = stats.apply(&censored.subset(&val_idx))?;
    let outcome = fit(pipeline.kind, pipeline.family, &train, &val, cfg)?;
    let (curve, floor_hits) = (outcome.curve.clone(), outcome.floor_hits);
    Ok(Trained { model: outcome.into_model(stats, cfg.clone(), pipeline.prep()), curve, censoring: spec, floor_hits })
}
