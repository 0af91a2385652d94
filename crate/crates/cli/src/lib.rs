//! `rtdnet`: generate data, train, evaluate and probe runtime-distribution
//! models.
//!
//! Exit codes: 0 success, 2 usage or I/O error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rtdnet::data::{generate_synthetic, write_synthetic, Dataset, Scenario};
use rtdnet::dist::Family;
use rtdnet::eval::{
    adversarial_scan, aggregate, evaluate, run_sweep, shift_grid, write_metrics_json, write_report_csv,
    write_shift_csv, EvalConfig, MetricReport, SweepAxis, SweepConfig,
};
use rtdnet::model::{ModelKind, TrainedModel};
use rtdnet::train::{train_model, write_curve, Pipeline, TrainConfig, DESK_GRAD_CLIP};

#[derive(Parser)]
#[command(name = "rtdnet", version, about = "Runtime-distribution prediction with DistNet and Bayes DistNet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (instances.csv, runtimes.csv, truth.json).
    Gen(GenArgs),
    /// Train a model and write it as JSON, plus a training-curve CSV.
    Train(TrainArgs),
    /// Evaluate a model on a dataset and write metrics.json.
    Eval(EvalArgs),
    /// Predict the runtime distribution of one feature vector.
    Predict(PredictArgs),
    /// Cross-validated sweep over observations per instance or censoring.
    Sweep(SweepArgs),
    /// Shift an instance's standardized features and tabulate the quartiles.
    Adversarial(AdversarialArgs),
}

#[derive(Args)]
struct GenArgs {
    /// lognormal-synth or invgauss-synth
    scenario: Scenario,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    instances: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    obs: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    features: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

/// Optimizer settings shared by `train` and `sweep`.
#[derive(Args, Clone)]
struct OptimArgs {
    /// Initial learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Learning rate reached after 500 epochs.
    #[arg(long, default_value_t = 1e-5)]
    lr_end: f64,
    /// Monte Carlo forward passes per Bayes DistNet prediction.
    #[arg(long, default_value_t = 16)]
    mc_samples: usize,
    /// Global gradient-norm clip.
    #[arg(long, default_value_t = DESK_GRAD_CLIP)]
    grad_clip: f64,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    /// Early-stopping patience in epochs.
    #[arg(long, default_value_t = 20)]
    patience: usize,
}

impl OptimArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate_start: self.lr,
            learning_rate_end: self.lr_end,
            mc_samples: self.mc_samples,
            grad_clip: self.grad_clip,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            ..TrainConfig::desk()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// distnet or bayes
    #[arg(long)]
    model: ModelKind,
    /// lognormal or invgauss
    #[arg(long)]
    dist: Family,
    /// Dataset directory holding instances.csv and runtimes.csv.
    #[arg(long)]
    data: PathBuf,
    /// Keep at most this many runs per instance.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    obs_per_instance: Option<u64>,
    /// Fraction of runs to censor at the pooled cutoff.
    #[arg(long, default_value_t = 0.0)]
    censoring: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: PathBuf,
    /// Training-curve CSV [default: <out>.curve.csv]
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Scenario label in the report [default: the data directory name]
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw feature values, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    features: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    /// obs_per_instance or censoring
    #[arg(long)]
    axis: SweepAxis,
    /// Axis values, comma separated [default: 1,2,4,8,16 or 0,0.2,0.4,0.6,0.8]
    #[arg(long)]
    values: Option<String>,
    /// Seeds, comma separated.
    #[arg(long, default_value = "1,2,3,4,5")]
    seeds: String,
    /// Model kinds, comma separated.
    #[arg(long, default_value = "distnet,bayes")]
    models: String,
    /// Families, comma separated.
    #[arg(long, default_value = "lognormal,invgauss")]
    dists: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Run only the first N folds of each split.
    #[arg(long)]
    fold_limit: Option<usize>,
    /// Runs per training instance on the censoring axis.
    #[arg(long, default_value_t = 8)]
    censoring_obs: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    optim: OptimArgs,
    /// Scenario label in the report [default: the data directory name]
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory for metrics.json and report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdversarialArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory containing the instance.
    #[arg(long)]
    data: PathBuf,
    /// Instance id.
    #[arg(long)]
    instance: String,
    /// lo:hi:step
    #[arg(long, default_value = "-8:8:1", allow_hyphen_values = true)]
    shifts: String,
    #[arg(long, default_value = "shifts.csv")]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Core(rtdnet::Error),
}

impl From<rtdnet::Error> for CliError {
    fn from(e: rtdnet::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(rtdnet::Error::Numerical(_)) => 3,
            _ => 2,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Command output goes to `out`;
/// diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return u8::try_from(e.exit_code()).unwrap_or(2);
        }
    };
    let res = match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Adversarial(a) => cmd_adversarial(a, out),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| CliError::Usage(format!("invalid {what} '{}'", v.trim()))))
        .collect()
}

fn scenario_label(explicit: Option<String>, data: &Path) -> String {
    explicit.unwrap_or_else(|| {
        fs::canonicalize(data)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".to_string())
    })
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> CliResult {
    let (ds, truth) =
        generate_synthetic(a.scenario, a.instances as usize, a.obs as usize, a.features as usize, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_synthetic(&a.out, &ds, &truth)?;
    writeln!(out, "wrote {} instances x {} runs to {}", ds.len(), a.obs, a.out.display())?;
    Ok(())
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> CliResult {
    let ds = Dataset::load(&a.data)?;
    let cfg = a.optim.config(a.seed);
    let pipeline = Pipeline {
        kind: a.model,
        family: a.dist,
        obs_per_instance: a.obs_per_instance.map(|k| k as usize),
        censoring: a.censoring,
    };
    let trained = train_model(&ds, &pipeline, &cfg)?;
    trained.model.save(&a.out)?;
    let curve = a.curve.unwrap_or_else(|| a.out.with_extension("curve.csv"));
    write_curve(&curve, &trained.curve)?;
    let c = &trained.censoring;
    writeln!(
        out,
        "trained {} ({}) for {} epochs, best epoch {}; censored {}/{} runs at cutoff {}",
        a.model,
        a.dist,
        trained.curve.len(),
        trained.model.best_epoch,
        c.censored,
        c.total,
        c.cutoff
    )?;
    if trained.floor_hits > 0 {
        eprintln!("note: survival floor engaged on {} rows during training", trained.floor_hits);
    }
    writeln!(out, "model: {}\ncurve: {}", a.out.display(), curve.display())?;
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> CliResult {
    let model = TrainedModel::load(&a.model)?;
    let ds = Dataset::load(&a.data)?;
    let m = evaluate(&model, &ds, &EvalConfig::default())?;
    let (axis, axis_value) = match model.prep.obs_per_instance {
        Some(k) if model.prep.censoring == 0.0 => (SweepAxis::ObsPerInstance, k as f64),
        _ => (SweepAxis::Censoring, model.prep.censoring),
    };
    let report = MetricReport {
        scenario: scenario_label(a.scenario, &a.data),
        model_kind: model.kind(),
        family: model.family(),
        axis,
        axis_value,
        fold: 0,
        seed: model.config.seed,
        nllh: m.nllh,
        kld: m.kld,
        ks: m.ks,
        oob_mass: m.oob_mass,
    };
    write_metrics_json(&a.out, &[report])?;
    writeln!(out, "nllh {} kld {} ks {} oob_mass {}", m.nllh, m.kld, m.ks, m.oob_mass)?;
    Ok(())
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> CliResult {
    let model = TrainedModel::load(&a.model)?;
    let features: Vec<f64> = parse_list(&a.features, "feature value")?;
    let scaled = model.predict(&[features])?.remove(0);
    let raw = scaled.to_raw(model.stats.runtime_scale);
    let doc = json!({
        "model_kind": model.kind(),
        "family": model.family(),
        "params_scaled": scaled.params,
        "params_raw": raw.params,
        "runtime_scale": model.stats.runtime_scale,
        "q25": raw.quartiles[0],
        "q50": raw.quartiles[1],
        "q75": raw.quartiles[2],
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(rtdnet::Error::from)?)?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> CliResult {
    let ds = Dataset::load(&a.data)?;
    let mut cfg = SweepConfig::new(scenario_label(a.scenario, &a.data), a.axis);
    if let Some(v) = &a.values {
        cfg.values = parse_list(v, "axis value")?;
    }
    cfg.seeds = parse_list(&a.seeds, "seed")?;
    cfg.kinds = parse_list(&a.models, "model kind")?;
    cfg.families = parse_list(&a.dists, "distribution")?;
    cfg.folds = a.folds;
    cfg.fold_limit = a.fold_limit;
    cfg.censoring_obs = a.censoring_obs;
    cfg.jobs = a.jobs;
    cfg.train = a.optim.config(0);
    let res = run_sweep(&ds, &cfg)?;
    fs::create_dir_all(&a.out)?;
    write_metrics_json(&a.out.join("metrics.json"), &res.reports)?;
    let rows = aggregate(&res.reports);
    write_report_csv(&a.out.join("report.csv"), &rows)?;
    for f in &res.failures {
        eprintln!(
            "cell failed: {} {} {}={} seed {} fold {}: {}",
            f.model_kind,
            f.family,
            cfg.axis.as_str(),
            f.axis_value,
            f.seed,
            f.fold,
            f.error
        );
    }
    writeln!(out, "{} cells evaluated, {} failed; wrote {}", res.reports.len(), res.failures.len(), a.out.display())?;
    if res.reports.is_empty() {
        return Err(CliError::Core(rtdnet::Error::Numerical("every sweep cell failed".into())));
    }
    Ok(())
}

fn cmd_adversarial(a: AdversarialArgs, out: &mut dyn Write) -> CliResult {
    let model = TrainedModel::load(&a.model)?;
    let ds = Dataset::load(&a.data)?;
    let idx = ds.find(&a.instance).ok_or_else(|| CliError::Usage(format!("no instance '{}'", a.instance)))?;
    let parts: Vec<f64> = a
        .shifts
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| CliError::Usage(format!("invalid shift range '{}'", a.shifts))))
        .collect::<CliResult<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(CliError::Usage(format!("shift range must be lo:hi:step, got '{}'", a.shifts)));
    };
    let rows = adversarial_scan(&model, &ds.instances[idx].features, &shift_grid(lo, hi, step)?)?;
    write_shift_csv(&a.out, &rows)?;
    writeln!(out, "wrote {} shifts to {}", rows.len(), a.out.display())?;
    Ok(())
}
