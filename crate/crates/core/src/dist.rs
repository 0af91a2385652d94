//! Parametric runtime-distribution families.
//!
//! Two families are supported: the lognormal, parameterized by the mean
//! and standard deviation of `ln t`, and the inverse Gaussian,
//! parameterized by its mean and shape (λ). Log-density and log-survival
//! come with analytic partial derivatives so the losses can put them on a
//! [`Tape`] as single elementwise nodes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffmath::special::{
    log1m_exp, std_normal_cdf, std_normal_log_cdf, std_normal_log_cdf_deriv, std_normal_log_pdf, std_normal_quantile,
    LN_SQRT_2PI,
};
use crate::diffmath::{Tape, Var};
use crate::error::{contract, domain, Error, Result};

/// Lower clamp on the lognormal MLE of σ.
pub const SIGMA_MIN: f64 = 1e-6;
/// Upper clamp on the inverse-Gaussian MLE of λ.
pub const LAMBDA_MAX: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "lognormal")]
    Lognormal,
    #[serde(rename = "invgauss")]
    InverseGaussian,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Lognormal, Family::InverseGaussian];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Lognormal => "lognormal",
            Family::InverseGaussian => "invgauss",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Family::Lognormal => "Lognormal",
            Family::InverseGaussian => "InverseGaussian",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lognormal" => Ok(Family::Lognormal),
            "invgauss" | "inversegaussian" | "inverse_gaussian" => Ok(Family::InverseGaussian),
            other => Err(contract(format!("unknown distribution family '{other}'"))),
        }
    }
}

/// A fully specified runtime distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistParams {
    #[serde(rename = "lognormal")]
    Lognormal { mu: f64, sigma: f64 },
    #[serde(rename = "invgauss")]
    InverseGaussian { mean: f64, shape: f64 },
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("runtime must be positive and finite, got {t}")))
    }
}

impl DistParams {
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("invalid lognormal parameters mu={mu}, sigma={sigma}")));
        }
        Ok(DistParams::Lognormal { mu, sigma })
    }

    pub fn inverse_gaussian(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) || !(shape > 0.0 && shape.is_finite()) {
            return Err(domain(format!("invalid inverse Gaussian parameters mean={mean}, shape={shape}")));
        }
        Ok(DistParams::InverseGaussian { mean, shape })
    }

    pub fn from_beta(family: Family, beta: [f64; 2]) -> Result<Self> {
        match family {
            Family::Lognormal => Self::lognormal(beta[0], beta[1]),
            Family::InverseGaussian => Self::inverse_gaussian(beta[0], beta[1]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            DistParams::Lognormal { .. } => Family::Lognormal,
            DistParams::InverseGaussian { .. } => Family::InverseGaussian,
        }
    }

    pub fn beta(&self) -> [f64; 2] {
        match *self {
            DistParams::Lognormal { mu, sigma } => [mu, sigma],
            DistParams::InverseGaussian { mean, shape } => [mean, shape],
        }
    }

    /// Distribution of `factor · T`.
    pub fn rescale(&self, factor: f64) -> Self {
        match *self {
            DistParams::Lognormal { mu, sigma } => DistParams::Lognormal { mu: mu + factor.ln(), sigma },
            DistParams::InverseGaussian { mean, shape } => {
                DistParams::InverseGaussian { mean: mean * factor, shape: shape * factor }
            }
        }
    }

    pub fn log_pdf(&self, t: f64) -> Result<f64> {
        Ok(self.log_pdf_grad(t)?.0)
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        Ok(self.log_pdf(t)?.exp())
    }

    /// Log-density and its partials with respect to `(β₁, β₂, t)`.
    pub fn log_pdf_grad(&self, t: f64) -> Result<(f64, [f64; 3])> {
        check_time(t)?;
        Ok(match *self {
            DistParams::Lognormal { mu, sigma } => {
                let z = (t.ln() - mu) / sigma;
                let v = -t.ln() - sigma.ln() - LN_SQRT_2PI - 0.5 * z * z;
                (v, [z / sigma, (z * z - 1.0) / sigma, -(1.0 + z / sigma) / t])
            }
            DistParams::InverseGaussian { mean, shape } => {
                let d = t - mean;
                let v = 0.5 * shape.ln() - LN_SQRT_2PI - 1.5 * t.ln() - shape * d * d / (2.0 * mean * mean * t);
                let dmean = shape * d / (mean * mean * mean);
                let dshape = 0.5 / shape - d * d / (2.0 * mean * mean * t);
                let dt = -1.5 / t - shape * (t * t - mean * mean) / (2.0 * mean * mean * t * t);
                (v, [dmean, dshape, dt])
            }
        })
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match *self {
            DistParams::Lognormal { mu, sigma } => std_normal_cdf((t.ln() - mu) / sigma),
            DistParams::InverseGaussian { mean, shape } => {
                let (a, b, c) = ig_terms(mean, shape, t);
                (std_normal_cdf(a) + (c + std_normal_log_cdf(-b)).exp()).min(1.0)
            }
        })
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match *self {
            DistParams::Lognormal { mu, sigma } => std_normal_cdf(-(t.ln() - mu) / sigma),
            DistParams::InverseGaussian { .. } => self.log_survival(t)?.exp(),
        })
    }

    pub fn log_survival(&self, t: f64) -> Result<f64> {
        Ok(self.log_survival_grad(t)?.0)
    }

    /// Log-survival and its partials with respect to `(β₁, β₂, t)`.
    pub fn log_survival_grad(&self, t: f64) -> Result<(f64, [f64; 3])> {
        check_time(t)?;
        Ok(match *self {
            DistParams::Lognormal { mu, sigma } => {
                let z = (t.ln() - mu) / sigma;
                let v = std_normal_log_cdf(-z);
                // d/dz ln Φ(−z) = −φ(z)/Φ(−z)
                let h = std_normal_log_cdf_deriv(-z);
                (v, [h / sigma, h * z / sigma, -h / (sigma * t)])
            }
            DistParams::InverseGaussian { mean, shape } => {
                let (a, b, c) = ig_terms(mean, shape, t);
                let log_upper = std_normal_log_cdf(-a);
                let log_corr = c + std_normal_log_cdf(-b);
                let v = log_upper + log1m_exp((log_corr - log_upper).min(0.0));
                // ∂F/∂mean = −(2λ/μ²)·e^c·Φ(−b); ∂F/∂λ = −φ(a)/√(λt) + (2/μ)·e^c·Φ(−b); ∂F/∂t = f(t)
                let corr_over_s = (log_corr - v).exp();
                let pdf_a_over_s = (std_normal_log_pdf(a) - v).exp();
                let dmean = 2.0 * shape / (mean * mean) * corr_over_s;
                let dshape = pdf_a_over_s / (shape * t).sqrt() - 2.0 / mean * corr_over_s;
                let (lp, _) = self.log_pdf_grad(t)?;
                let dt = -(lp - v).exp();
                (v, [dmean, dshape, dt])
            }
        })
    }

    /// Inverse CDF for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("quantile level must lie in (0,1), got {p}")));
        }
        Ok(match *self {
            DistParams::Lognormal { mu, sigma } => (mu + sigma * std_normal_quantile(p)).exp(),
            DistParams::InverseGaussian { mean, .. } => {
                let below = |lt: f64| self.cdf(lt.exp()).map(|f| f < p).unwrap_or(false);
                let (mut lo, mut hi) = (mean.ln(), mean.ln());
                while !below(lo) && lo > -740.0 {
                    lo -= 1.0;
                }
                while below(hi) && hi < 705.0 {
                    hi += 1.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if below(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (0.5 * (lo + hi)).exp()
            }
        })
    }

    /// Draws `n` runtimes. The inverse Gaussian uses the
    /// Michael–Schucany–Haas transformation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistParams::Lognormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            DistParams::InverseGaussian { mean, shape } => {
                let v: f64 = rng.sample(StandardNormal);
                let y = v * v;
                let x = mean + mean * mean * y / (2.0 * shape)
                    - mean / (2.0 * shape) * (4.0 * mean * shape * y + mean * mean * y * y).sqrt();
                let u: f64 = rng.random();
                if u <= mean / (mean + x) {
                    x
                } else {
                    mean * mean / x
                }
            }
        }
    }
}

/// `(a, b, 2λ/μ)` with a = √(λ/t)(t/μ − 1), b = √(λ/t)(t/μ + 1).
fn ig_terms(mean: f64, shape: f64, t: f64) -> (f64, f64, f64) {
    let r = (shape / t).sqrt();
    (r * (t / mean - 1.0), r * (t / mean + 1.0), 2.0 * shape / mean)
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(contract("MLE of an empty sample"));
    }
    if let Some(bad) = samples.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        if bad.is_nan() {
            return Err(Error::Numerical("MLE sample is NaN".into()));
        }
        return Err(domain(format!("MLE sample must be positive, got {bad}")));
    }
    Ok(())
}

/// Closed-form maximum-likelihood estimate.
///
/// Lognormal: μ̂ = mean(ln t), σ̂ = √mean((ln t − μ̂)²), floored at
/// [`SIGMA_MIN`]. Inverse Gaussian: μ̂ = mean(t),
/// λ̂ = n / Σ(1/tᵢ − 1/μ̂), capped at [`LAMBDA_MAX`]. The arithmetic
/// mirrors [`mle_on_tape`] operation for operation.
pub fn mle(family: Family, samples: &[f64]) -> Result<DistParams> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    match family {
        Family::Lognormal => {
            let logs: Vec<f64> = samples.iter().map(|t| t.ln()).collect();
            let mu = logs.iter().sum::<f64>() / n;
            let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / n;
            let sigma = var.max(SIGMA_MIN * SIGMA_MIN).sqrt();
            Ok(DistParams::Lognormal { mu, sigma })
        }
        Family::InverseGaussian => {
            let mean = samples.iter().sum::<f64>() / n;
            let inv_mean = 1.0 / mean;
            let d = samples.iter().map(|t| 1.0 / t - inv_mean).sum::<f64>() / n;
            let shape = 1.0 / d.max(1.0 / LAMBDA_MAX);
            Ok(DistParams::InverseGaussian { mean, shape })
        }
    }
}

/// Per-row distribution parameters living on a tape; `beta1` and `beta2`
/// are `rows×1`.
#[derive(Clone, Copy, Debug)]
pub struct TapeParams {
    pub family: Family,
    pub beta1: Var,
    pub beta2: Var,
}

impl TapeParams {
    pub fn row(&self, tape: &Tape, i: usize) -> Result<DistParams> {
        DistParams::from_beta(self.family, [tape.value(self.beta1).get(i, 0), tape.value(self.beta2).get(i, 0)])
    }

    pub fn rows(&self, tape: &Tape) -> Result<Vec<DistParams>> {
        (0..tape.value(self.beta1).rows()).map(|i| self.row(tape, i)).collect()
    }
}

/// Row-wise MLE of a `rows×N` matrix of positive samples, differentiable
/// with respect to every sample.
pub fn mle_on_tape(tape: &mut Tape, family: Family, samples: Var) -> Result<TapeParams> {
    match family {
        Family::Lognormal => {
            let logs = tape.ln(samples)?;
            let mu = tape.mean_cols(logs);
            let neg_mu = tape.neg(mu);
            let dev = tape.add_col(logs, neg_mu);
            let sq = tape.square(dev);
            let var = tape.mean_cols(sq);
            let floored = tape.clamp_min(var, SIGMA_MIN * SIGMA_MIN);
            let sigma = tape.sqrt(floored)?;
            Ok(TapeParams { family, beta1: mu, beta2: sigma })
        }
        Family::InverseGaussian => {
            let mean = tape.mean_cols(samples);
            let inv = tape.recip(samples)?;
            let inv_mean = tape.recip(mean)?;
            let neg_inv_mean = tape.neg(inv_mean);
            let diff = tape.add_col(inv, neg_inv_mean);
            let d = tape.mean_cols(diff);
            let floored = tape.clamp_min(d, 1.0 / LAMBDA_MAX);
            let shape = tape.recip(floored)?;
            Ok(TapeParams { family, beta1: mean, beta2: shape })
        }
    }
}
