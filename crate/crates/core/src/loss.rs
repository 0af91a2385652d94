//! Training costs.
//!
//! A right-censored observation contributes `ln S(t)` instead of
//! `ln f(t)`. The DistNet cost is the censored negative log-likelihood of
//! the network's output distribution; the Bayes DistNet cost adds a
//! weighted Monte Carlo estimate of KL[q(w|θ) ‖ P(w)] and scores each row
//! under the MLE fit of that row's sampled runtimes.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::diffmath::{Matrix, Tape, Var};
use crate::dist::{mle_on_tape, DistParams, TapeParams};
use crate::error::{contract, Result};
use crate::net::{BayesNet, BoundBayes, BoundDistNet, DistNet, WeightNoise};

/// Survival probabilities below this are clamped before taking the log.
pub const SURVIVAL_FLOOR: f64 = 1e-300;

pub fn log_survival_floor() -> f64 {
    SURVIVAL_FLOOR.ln()
}

/// One runtime in scaled units. `observed == false` marks a run that was
/// stopped at the cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub runtime: f64,
    pub observed: bool,
}

impl Observation {
    pub fn observed(runtime: f64) -> Self {
        Self { runtime, observed: true }
    }

    pub fn censored(runtime: f64) -> Self {
        Self { runtime, observed: false }
    }
}

/// Log-likelihood contribution and partials w.r.t. `(β₁, β₂)`, plus
/// whether the survival floor engaged.
fn loglik_grad(params: &DistParams, obs: &Observation) -> Result<(f64, [f64; 2], bool)> {
    if obs.observed {
        let (v, g) = params.log_pdf_grad(obs.runtime)?;
        return Ok((v, [g[0], g[1]], false));
    }
    let (v, g) = params.log_survival_grad(obs.runtime)?;
    let floor = log_survival_floor();
    if v < floor || v.is_nan() {
        Ok((floor, [0.0, 0.0], true))
    } else {
        Ok((v, [g[0], g[1]], false))
    }
}

/// `ln f(t)` for an observed run, `ln S(t)` (floored) for a censored one.
pub fn censored_loglik(params: &DistParams, obs: &Observation) -> Result<f64> {
    Ok(loglik_grad(params, obs)?.0)
}

/// Row-wise censored log-likelihood (`rows×1`) and the number of rows
/// where the survival floor engaged.
pub fn censored_loglik_on_tape(tape: &mut Tape, tp: &TapeParams, obs: &[Observation]) -> Result<(Var, usize)> {
    let rows = tape.value(tp.beta1).rows();
    if rows != obs.len() {
        return Err(contract(format!("{rows} parameter rows for {} observations", obs.len())));
    }
    let t = tape.constant(Matrix::col_vector(obs.iter().map(|o| o.runtime).collect()));
    let d = tape.constant(Matrix::col_vector(obs.iter().map(|o| if o.observed { 1.0 } else { 0.0 }).collect()));
    let family = tp.family;
    let hits = Cell::new(0usize);
    let ll = tape.map_n(&[tp.beta1, tp.beta2, t, d], |a| {
        let params = DistParams::from_beta(family, [a[0], a[1]])?;
        let (v, g, floored) = loglik_grad(&params, &Observation { runtime: a[2], observed: a[3] == 1.0 })?;
        hits.set(hits.get() + usize::from(floored));
        Ok((v, vec![g[0], g[1], 0.0, 0.0]))
    })?;
    Ok((ll, hits.get()))
}

/// How the per-sample complexity terms are combined across Monte Carlo
/// draws before `kl_weight` is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexityNorm {
    #[default]
    Mean,
    Sum,
}

/// A cost on the tape together with its parts as plain numbers.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub data: f64,
    pub complexity: f64,
    pub l2: f64,
    pub floor_hits: usize,
}

/// `l2 · Σ w²` over `vars`.
fn l2_penalty(tape: &mut Tape, vars: &[Var], l2: f64) -> Option<Var> {
    if l2 == 0.0 {
        return None;
    }
    let mut acc = None::<Var>;
    for &v in vars {
        let sq = tape.square(v);
        let s = tape.sum(sq);
        acc = Some(match acc {
            Some(a) => tape.add(a, s),
            None => s,
        });
    }
    acc.map(|a| tape.scale(a, l2))
}

fn finish(tape: &mut Tape, data: Var, complexity: Option<Var>, l2: Option<Var>, floor_hits: usize) -> LossParts {
    let mut total = data;
    let value = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.scalar_value(v));
    for extra in [complexity, l2].into_iter().flatten() {
        total = tape.add(total, extra);
    }
    LossParts {
        total,
        data: tape.scalar_value(data),
        complexity: value(tape, complexity),
        l2: value(tape, l2),
        floor_hits,
    }
}

/// −Σ censored log-likelihood of the network's output distributions plus
/// the L2 penalty on the weight matrices.
pub fn distnet_loss(
    net: &mut DistNet,
    tape: &mut Tape,
    bound: &BoundDistNet,
    x: Var,
    obs: &[Observation],
    l2: f64,
    training: bool,
) -> Result<LossParts> {
    if obs.is_empty() {
        return Err(contract("empty batch"));
    }
    let tp = net.forward(tape, bound, x, training)?;
    let (ll, hits) = censored_loglik_on_tape(tape, &tp, obs)?;
    let s = tape.sum(ll);
    let data = tape.neg(s);
    let reg = l2_penalty(tape, &bound.decayed(), l2);
    Ok(finish(tape, data, None, reg, hits))
}

/// Variational cost: `kl_weight` times the combined `ln q − ln P` over one
/// weight draw per entry of `noise`, plus −Σ censored log-likelihood of
/// each row under the MLE of its `noise.len()` predicted runtimes, plus the
/// L2 penalty on the posterior means of the weight matrices.
#[allow(clippy::too_many_arguments)]
pub fn bayes_loss(
    net: &mut BayesNet,
    tape: &mut Tape,
    bound: &BoundBayes,
    x: Var,
    obs: &[Observation],
    noise: &[WeightNoise],
    kl_weight: f64,
    norm: ComplexityNorm,
    l2: f64,
    training: bool,
) -> Result<LossParts> {
    if obs.is_empty() {
        return Err(contract("empty batch"));
    }
    if noise.len() < 2 {
        return Err(contract(format!("need at least 2 Monte Carlo samples, got {}", noise.len())));
    }
    if !(kl_weight >= 0.0) {
        return Err(contract(format!("kl_weight must be non-negative, got {kl_weight}")));
    }
    let mut outputs = Vec::with_capacity(noise.len());
    let mut kl = None::<Var>;
    for eps in noise {
        let w = net.sample_on_tape(tape, bound, eps)?;
        outputs.push(net.forward_sampled(tape, bound, &w.layers, x, training)?);
        let d = tape.sub(w.log_q, w.log_p);
        kl = Some(match kl {
            Some(acc) => tape.add(acc, d),
            None => d,
        });
    }
    let kl = kl.expect("at least two samples");
    let factor = match norm {
        ComplexityNorm::Mean => kl_weight / noise.len() as f64,
        ComplexityNorm::Sum => kl_weight,
    };
    let complexity = (kl_weight != 0.0).then(|| tape.scale(kl, factor));

    let y = tape.concat_cols(&outputs);
    let tp = mle_on_tape(tape, net.family, y)?;
    let (ll, hits) = censored_loglik_on_tape(tape, &tp, obs)?;
    let s = tape.sum(ll);
    let data = tape.neg(s);
    let reg = l2_penalty(tape, &bound.decayed(), l2);
    Ok(finish(tape, data, complexity, reg, hits))
}
