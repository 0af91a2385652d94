//! Goodness-of-fit metrics, cross-validated sweeps, aggregation, and the
//! feature-shift uncertainty probe.
//!
//! KS, KLD and out-of-range mass are computed per test instance against
//! that instance's runtimes and then averaged over instances; NLLH is the
//! mean over all test runtimes. All metrics use scaled time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold, Dataset};
use crate::diffmath::Matrix;
use crate::dist::{DistParams, Family};
use crate::error::{contract, Result};
use crate::model::{ModelKind, TrainedModel};
use crate::net::DEFAULT_MC_SAMPLES;
use crate::rng;
use crate::train::{train_model, Pipeline, TrainConfig};

/// Probabilities are floored at this before renormalizing in the KLD.
pub const KLD_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub range_multiplier: f64,
    pub kld_bins: usize,
    pub mc_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { range_multiplier: 1.5, kld_bins: 20, mc_samples: DEFAULT_MC_SAMPLES }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_multiplier > 1.0) || self.kld_bins < 2 || self.mc_samples < 2 {
            return Err(contract(format!("invalid evaluation config {self:?}")));
        }
        Ok(())
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn max_of(samples: &[f64]) -> f64 {
    samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// One-sample two-sided Kolmogorov–Smirnov statistic.
pub fn ks_metric(pred: &DistParams, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(contract("KS statistic of an empty sample"));
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &t) in s.iter().enumerate() {
        let f = pred.cdf(t)?;
        d = d.max((((i + 1) as f64) / n - f).abs()).max((f - i as f64 / n).abs());
    }
    Ok(d.min(1.0))
}

/// Histogram KL(p‖q) over `kld_bins` equal-width bins on [0, T] and one
/// overflow bin, T = range_multiplier · max sample.
pub fn kld_metric(pred: &DistParams, samples: &[f64], cfg: &EvalConfig) -> Result<f64> {
    if samples.len() < cfg.kld_bins {
        return Err(contract(format!("KLD needs at least {} samples, got {}", cfg.kld_bins, samples.len())));
    }
    let bins = cfg.kld_bins;
    let top = cfg.range_multiplier * max_of(samples);
    let width = top / bins as f64;
    let mut p = vec![0.0; bins + 1];
    for &t in samples {
        let k = ((t / width) as usize).min(bins - 1);
        p[k] += 1.0;
    }
    p.iter_mut().for_each(|c| *c /= samples.len() as f64);
    let mut q = Vec::with_capacity(bins + 1);
    let mut prev = 0.0;
    for k in 1..=bins {
        let c = pred.cdf(width * k as f64)?;
        q.push((c - prev).max(0.0));
        prev = c;
    }
    q.push(pred.survival(top)?);
    Ok(histogram_kl(&p, &q))
}

/// KL divergence of two histograms after flooring at [`KLD_FLOOR`] and
/// renormalizing.
pub fn histogram_kl(p: &[f64], q: &[f64]) -> f64 {
    let norm = |v: &[f64]| {
        let f: Vec<f64> = v.iter().map(|x| x.max(KLD_FLOOR)).collect();
        let s: f64 = f.iter().sum();
        f.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let (p, q) = (norm(p), norm(q));
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// Predicted mass beyond range_multiplier · max sample.
pub fn oob_mass_metric(pred: &DistParams, samples: &[f64], cfg: &EvalConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(contract("out-of-range mass of an empty sample"));
    }
    pred.survival(cfg.range_multiplier * max_of(samples))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nllh: f64,
    pub kld: f64,
    pub ks: f64,
    pub oob_mass: f64,
}

/// Mean −ln f over every runtime of every instance, given one prediction
/// per instance.
pub fn nllh_metric(preds: &[DistParams], runtimes: &[Vec<f64>]) -> Result<f64> {
    let n: usize = runtimes.iter().map(Vec::len).sum();
    if n == 0 || preds.len() != runtimes.len() {
        return Err(contract("NLLH needs one prediction per nonempty instance"));
    }
    let mut total = 0.0;
    for (p, ts) in preds.iter().zip(runtimes) {
        for &t in ts {
            total -= p.log_pdf(t)?;
        }
    }
    Ok(total / n as f64)
}

/// All four metrics for per-instance predictions and runtimes (both in the
/// same time units).
pub fn metrics_for(preds: &[DistParams], runtimes: &[Vec<f64>], cfg: &EvalConfig) -> Result<Metrics> {
    let nllh = nllh_metric(preds, runtimes)?;
    let k = preds.len() as f64;
    let (mut kld, mut ks, mut oob) = (0.0, 0.0, 0.0);
    for (p, ts) in preds.iter().zip(runtimes) {
        kld += kld_metric(p, ts, cfg)?;
        ks += ks_metric(p, ts)?;
        oob += oob_mass_metric(p, ts, cfg)?;
    }
    Ok(Metrics { nllh, kld: kld / k, ks: ks / k, oob_mass: oob / k })
}

/// Evaluates a model on raw test instances (features and seconds).
pub fn evaluate(model: &TrainedModel, test: &Dataset, cfg: &EvalConfig) -> Result<Metrics> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(contract("empty test set"));
    }
    let rows: Vec<Vec<f64>> = test.instances.iter().map(|i| i.features.clone()).collect();
    let preds: Vec<DistParams> = model.predict(&rows)?.into_iter().map(|p| p.params).collect();
    let runtimes: Vec<Vec<f64>> =
        test.instances.iter().map(|i| i.runs.iter().map(|r| model.stats.scale_runtime(r.runtime)).collect()).collect();
    metrics_for(&preds, &runtimes, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ObsPerInstance,
    Censoring,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::ObsPerInstance => "obs_per_instance",
            SweepAxis::Censoring => "censoring",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::ObsPerInstance => vec![1.0, 2.0, 4.0, 8.0, 16.0],
            SweepAxis::Censoring => vec![0.0, 0.2, 0.4, 0.6, 0.8],
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obs" | "obs_per_instance" | "obs-per-instance" => Ok(SweepAxis::ObsPerInstance),
            "censoring" => Ok(SweepAxis::Censoring),
            other => Err(contract(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// One trained-and-evaluated cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub model_kind: ModelKind,
    pub family: Family,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub fold: usize,
    pub seed: u64,
    pub nllh: f64,
    pub kld: f64,
    pub ks: f64,
    pub oob_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub model_kind: ModelKind,
    pub family: Family,
    pub axis_value: f64,
    pub fold: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub scenario: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub kinds: Vec<ModelKind>,
    pub families: Vec<Family>,
    pub folds: usize,
    /// Run only the first `fold_limit` folds of each split.
    pub fold_limit: Option<usize>,
    pub seeds: Vec<u64>,
    /// Runs per training instance on the censoring axis.
    pub censoring_obs: usize,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub jobs: usize,
}

impl SweepConfig {
    pub fn new(scenario: impl Into<String>, axis: SweepAxis) -> Self {
        Self {
            scenario: scenario.into(),
            axis,
            values: axis.default_values(),
            kinds: ModelKind::ALL.to_vec(),
            families: Family::ALL.to_vec(),
            folds: 10,
            fold_limit: None,
            seeds: (1..=5).collect(),
            censoring_obs: 8,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub reports: Vec<MetricReport>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    kind: ModelKind,
    family: Family,
    value: f64,
    fold: usize,
    seed: u64,
}

fn run_cell(ds: &Dataset, cfg: &SweepConfig, cell: Cell) -> Result<Metrics> {
    let folds = kfold(ds.len(), cfg.folds, &mut rng::stream(cell.seed, "kfold", 0))?;
    let fold = &folds[cell.fold];
    let (obs, censoring) = match cfg.axis {
        SweepAxis::ObsPerInstance => (cell.value as usize, 0.0),
        SweepAxis::Censoring => (cfg.censoring_obs, cell.value),
    };
    let train_cfg =
        TrainConfig { seed: rng::stream(cell.seed, "fold-seed", cell.fold as u64).random(), ..cfg.train.clone() };
    let pipeline = Pipeline { kind: cell.kind, family: cell.family, obs_per_instance: Some(obs), censoring };
    let trained = train_model(&ds.subset(&fold.train), &pipeline, &train_cfg)?;
    evaluate(&trained.model, &ds.subset(&fold.test), &cfg.eval)
}

/// Trains and evaluates every (model, family, axis value, fold, seed)
/// cell. Cells run in parallel on `jobs` threads; failed cells are
/// recorded and the sweep continues. Output order is independent of
/// scheduling.
pub fn run_sweep(ds: &Dataset, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.eval.validate()?;
    cfg.train.validate()?;
    if cfg.seeds.is_empty() || cfg.values.is_empty() || cfg.kinds.is_empty() || cfg.families.is_empty() {
        return Err(contract("sweep needs at least one seed, axis value, model kind and family"));
    }
    if ds.len() < cfg.folds {
        return Err(contract(format!("cannot split {} instances into {} folds", ds.len(), cfg.folds)));
    }
    for &v in &cfg.values {
        let ok = match cfg.axis {
            SweepAxis::ObsPerInstance => v >= 1.0 && v.fract() == 0.0,
            SweepAxis::Censoring => (0.0..1.0).contains(&v),
        };
        if !ok {
            return Err(contract(format!("invalid {} value {v}", cfg.axis.as_str())));
        }
    }
    let n_folds = cfg.fold_limit.map_or(cfg.folds, |l| l.min(cfg.folds));
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &value in &cfg.values {
            for &kind in &cfg.kinds {
                for &family in &cfg.families {
                    for fold in 0..n_folds {
                        cells.push(Cell { kind, family, value, fold, seed });
                    }
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| contract(format!("thread pool: {e}")))?;
    let outcomes: Vec<(Cell, Result<Metrics>)> =
        pool.install(|| cells.par_iter().map(|&c| (c, run_cell(ds, cfg, c))).collect());

    let mut out = SweepResult::default();
    for (c, r) in outcomes {
        match r {
            Ok(m) => out.reports.push(MetricReport {
                scenario: cfg.scenario.clone(),
                model_kind: c.kind,
                family: c.family,
                axis: cfg.axis,
                axis_value: c.value,
                fold: c.fold,
                seed: c.seed,
                nllh: m.nllh,
                kld: m.kld,
                ks: m.ks,
                oob_mass: m.oob_mass,
            }),
            Err(e) => out.failures.push(CellFailure {
                model_kind: c.kind,
                family: c.family,
                axis_value: c.value,
                fold: c.fold,
                seed: c.seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-cell summary across folds and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub model_kind: ModelKind,
    pub family: Family,
    pub count: usize,
    pub nllh: (f64, f64),
    pub kld: (f64, f64),
    pub ks: (f64, f64),
    pub oob_mass: (f64, f64),
}

/// Groups reports by (scenario, axis, value, model, family) and
/// summarizes each metric as (mean, std).
pub fn aggregate(reports: &[MetricReport]) -> Vec<AggregateRow> {
    type Key = (String, SweepAxis, u64, ModelKind, Family);
    let mut groups: BTreeMap<Key, Vec<&MetricReport>> = BTreeMap::new();
    for r in reports {
        let key = (r.scenario.clone(), r.axis, r.axis_value.to_bits(), r.model_kind, r.family);
        groups.entry(key).or_default().push(r);
    }
    let mut rows: Vec<AggregateRow> = groups
        .into_iter()
        .map(|((scenario, axis, value, kind, family), rs)| {
            let col = |f: fn(&MetricReport) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                scenario,
                axis,
                axis_value: f64::from_bits(value),
                model_kind: kind,
                family,
                count: rs.len(),
                nllh: col(|r| r.nllh),
                kld: col(|r| r.kld),
                ks: col(|r| r.ks),
                oob_mass: col(|r| r.oob_mass),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.scenario.as_str(), a.axis, a.model_kind, a.family)
            .cmp(&(b.scenario.as_str(), b.axis, b.model_kind, b.family))
            .then(a.axis_value.total_cmp(&b.axis_value))
    });
    rows
}

pub const REPORT_HEADER: [&str; 12] = [
    "scenario",
    "axis",
    "model",
    "distribution",
    "nllh_mean",
    "nllh_std",
    "kld_mean",
    "kld_std",
    "ks_mean",
    "ks_std",
    "mass_mean",
    "mass_std",
];

/// Writes the aggregated table; the axis column reads `name=value`.
pub fn write_report_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.scenario.clone(),
            format!("{}={}", r.axis.as_str(), r.axis_value),
            r.model_kind.label().to_string(),
            r.family.label().to_string(),
        ];
        for (m, s) in [r.nllh, r.kld, r.ks, r.oob_mass] {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_metrics_json(path: &Path, reports: &[MetricReport]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(reports)? + "\n")?;
    Ok(())
}

/// Required keys of a metrics.json record and their JSON types.
pub const METRIC_REPORT_SCHEMA: [(&str, &str); 11] = [
    ("scenario", "string"),
    ("model_kind", "string"),
    ("family", "string"),
    ("axis", "string"),
    ("axis_value", "number"),
    ("fold", "number"),
    ("seed", "number"),
    ("nllh", "number"),
    ("kld", "number"),
    ("ks", "number"),
    ("oob_mass", "number"),
];

/// Checks a parsed metrics.json document against
/// [`METRIC_REPORT_SCHEMA`] and the metric ranges.
pub fn validate_metrics_json(doc: &serde_json::Value) -> Result<()> {
    let arr = doc.as_array().ok_or_else(|| contract("metrics.json must be an array"))?;
    for (i, rec) in arr.iter().enumerate() {
        let obj = rec.as_object().ok_or_else(|| contract(format!("record {i} is not an object")))?;
        for (key, ty) in METRIC_REPORT_SCHEMA {
            let v = obj.get(key).ok_or_else(|| contract(format!("record {i} lacks '{key}'")))?;
            let ok = match ty {
                "string" => v.is_string(),
                _ => v.is_number(),
            };
            if !ok {
                return Err(contract(format!("record {i}: '{key}' must be a {ty}")));
            }
        }
        for key in ["ks", "oob_mass"] {
            let v = obj[key].as_f64().unwrap_or(f64::NAN);
            if !(0.0..=1.0).contains(&v) {
                return Err(contract(format!("record {i}: '{key}' = {v} outside [0,1]")));
            }
        }
    }
    Ok(())
}

/// Predicted median and quartiles, in seconds, after shifting every
/// standardized feature by `shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub shift: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub iqr: f64,
}

/// Probes how predictions spread as an instance is moved away from the
/// training distribution. Bayes DistNet reports quartiles of its raw Monte
/// Carlo runtimes; DistNet the quartiles of its output distribution.
pub fn adversarial_scan(model: &TrainedModel, base_features: &[f64], shifts: &[f64]) -> Result<Vec<ShiftRow>> {
    let base = model.stats.standardize(base_features)?;
    let mut shifts = shifts.to_vec();
    shifts.sort_by(f64::total_cmp);
    shifts
        .iter()
        .map(|&s| {
            let x = Matrix::row_vector(base.iter().map(|f| f + s).collect());
            let pred = model.predict_standardized(&x)?.remove(0).to_raw(model.stats.runtime_scale);
            let [q25, median, q75] = pred.quartiles;
            Ok(ShiftRow { shift: s, q25, median, q75, iqr: q75 - q25 })
        })
        .collect()
}

/// `lo, lo+step, …, hi` (inclusive within rounding).
pub fn shift_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(contract(format!("invalid shift range {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

pub fn write_shift_csv(path: &Path, rows: &[ShiftRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["shift", "q25", "median", "q75", "iqr"])?;
    for r in rows {
        w.write_record([r.shift, r.q25, r.median, r.q75, r.iqr].map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2PI_HALF: f64 = 0.918_938_533_204_672_8;

    #[test]
    fn ks_at_quantile_points() {
        let d = DistParams::lognormal(0.3, 0.8).unwrap();
        let n = 40;
        let s: Vec<f64> = (1..=n).map(|i| d.quantile((i as f64 - 0.5) / n as f64).unwrap()).collect();
        assert!((ks_metric(&d, &s).unwrap() - 0.5 / n as f64).abs() < 1e-9);
        let mut rev = s.clone();
        rev.reverse();
        assert_eq!(ks_metric(&d, &rev).unwrap(), ks_metric(&d, &s).unwrap());
        let far = DistParams::lognormal(50.0, 0.1).unwrap();
        assert!(ks_metric(&far, &s).unwrap() > 1.0 - 1.0 / n as f64);
    }

    #[test]
    fn kld_identity_and_perturbation() {
        assert_eq!(histogram_kl(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]), 0.0);
        assert!(histogram_kl(&[0.2, 0.3, 0.5], &[0.25, 0.25, 0.5]) > 0.0);
        assert!(histogram_kl(&[1.0, 0.0], &[0.0, 1.0]) > 0.0);
    }

    #[test]
    fn kld_self_consistency() {
        let d = DistParams::lognormal(0.0, 1.0).unwrap();
        let s = d.sample(&mut rng::stream(0, "kld", 0), 1000);
        let kl = kld_metric(&d, &s, &EvalConfig::default()).unwrap();
        assert!((0.0..0.05).contains(&kl), "{kl}");
        assert!(kld_metric(&d, &s[..5], &EvalConfig::default()).is_err());
    }

    #[test]
    fn oob_reference_values() {
        let cfg = EvalConfig::default();
        let d = DistParams::lognormal(0.0, 1.0).unwrap();
        assert!((oob_mass_metric(&d, &[0.2, 1.0], &cfg).unwrap() - 0.343_4).abs() < 1e-3);
        assert!(oob_mass_metric(&DistParams::lognormal(-10.0, 0.1).unwrap(), &[1.0], &cfg).unwrap() < 1e-12);
        assert!(oob_mass_metric(&DistParams::lognormal(5.0, 1.0).unwrap(), &[1.0], &cfg).unwrap() > 0.5);
    }

    #[test]
    fn nllh_reference_values() {
        let d = DistParams::lognormal(0.0, 1.0).unwrap();
        let one = nllh_metric(&[d], &[vec![1.0, 1.0]]).unwrap();
        assert!((one - LN_2PI_HALF).abs() < 1e-15);
        let two = nllh_metric(&[d, d], &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn aggregation_matches_direct_computation() {
        let mk = |kind, v: f64, fold, nllh| MetricReport {
            scenario: "s".into(),
            model_kind: kind,
            family: Family::Lognormal,
            axis: SweepAxis::ObsPerInstance,
            axis_value: v,
            fold,
            seed: 1,
            nllh,
            kld: 0.0,
            ks: 0.5,
            oob_mass: 0.1,
        };
        let reports = vec![
            mk(ModelKind::Bayes, 1.0, 0, 1.0),
            mk(ModelKind::Bayes, 1.0, 1, 3.0),
            mk(ModelKind::DistNet, 1.0, 0, 7.0),
            mk(ModelKind::Bayes, 2.0, 0, 5.0),
        ];
        let rows = aggregate(&reports);
        assert_eq!(rows.len(), 3);
        let b1 = rows.iter().find(|r| r.model_kind == ModelKind::Bayes && r.axis_value == 1.0).unwrap();
        assert_eq!(b1.count, 2);
        assert_eq!(b1.nllh, (2.0, 2f64.sqrt()));
        assert_eq!(b1.ks, (0.5, 0.0));
    }

    #[test]
    fn shift_grid_is_inclusive() {
        assert_eq!(shift_grid(-8.0, 8.0, 2.0).unwrap().len(), 9);
        assert_eq!(shift_grid(0.0, 1.0, 0.1).unwrap().len(), 11);
        assert!(shift_grid(1.0, 0.0, 1.0).is_err());
    }
}
