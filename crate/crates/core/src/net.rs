//! Network architectures.
//!
//! [`DistNet`] maps standardized instance features to the parameters of a
//! runtime distribution. [`BayesNet`] keeps a diagonal Gaussian posterior
//! over every weight and bias and outputs one predicted runtime per
//! stochastic forward pass; its predictive distribution is the MLE fit of
//! several such passes.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffmath::special::{log_add_exp, sigmoid, softplus, LN_SQRT_2PI};
use crate::diffmath::{BatchNormState, BnAffine, Matrix, Tape, Var};
use crate::dist::{mle, DistParams, Family, TapeParams};
use crate::error::{contract, Result};

pub const HIDDEN_UNITS: [usize; 2] = [16, 16];
/// Bound on the exponent of the DistNet output activation.
pub const OUTPUT_EXP_CLAMP: f64 = 30.0;
/// Floor on a Bayes DistNet output so that `ln ŷ` and `1/ŷ` stay finite.
pub const MIN_RUNTIME_OUTPUT: f64 = 1e-30;
pub const DEFAULT_MC_SAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    pub fn distnet(input_dim: usize) -> Self {
        Self { input_dim, hidden: HIDDEN_UNITS.to_vec(), output_dim: 2 }
    }

    pub fn bayes(input_dim: usize) -> Self {
        Self { input_dim, hidden: HIDDEN_UNITS.to_vec(), output_dim: 1 }
    }

    /// `(fan_in, fan_out)` of every dense layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(contract("network needs at least one input feature"));
        }
        if self.hidden != HIDDEN_UNITS {
            return Err(contract(format!("hidden layers must be {HIDDEN_UNITS:?}, got {:?}", self.hidden)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// `f(is_bias)` supplies every entry, weights first.
    fn from_fn(fan_in: usize, fan_out: usize, mut f: impl FnMut(bool) -> f64) -> Self {
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| f(false));
        Self { weight, bias: Matrix::from_fn(1, fan_out, |_, _| f(true)) }
    }

    fn bind(&self, tape: &mut Tape) -> (Var, Var) {
        (tape.leaf(self.weight.clone()), tape.leaf(self.bias.clone()))
    }

    fn constants(&self, tape: &mut Tape) -> (Var, Var) {
        (tape.constant(self.weight.clone()), tape.constant(self.bias.clone()))
    }
}

fn check_input(arch: &Architecture, x: &Matrix) -> Result<()> {
    if x.cols() != arch.input_dim {
        return Err(contract(format!("model expects {} features, got {}", arch.input_dim, x.cols())));
    }
    if x.rows() == 0 {
        return Err(contract("empty input batch"));
    }
    Ok(())
}

/// Linear → batch norm → activation for each hidden layer, then the
/// output layer's linear map.
fn mlp(
    tape: &mut Tape,
    layers: &[(Var, Var)],
    bn: &mut [BatchNormState],
    affine: &[BnAffine],
    x: Var,
    training: bool,
    act: fn(&mut Tape, Var) -> Var,
) -> Result<Var> {
    let (last, hidden) = layers.split_last().expect("at least one layer");
    let mut h = x;
    for (i, &(w, b)) in hidden.iter().enumerate() {
        let z = tape.matmul(h, w);
        let z = tape.add_row(z, b);
        let z = bn[i].forward(tape, z, affine[i], training)?;
        h = act(tape, z);
    }
    let z = tape.matmul(h, last.0);
    Ok(tape.add_row(z, last.1))
}

/// Tape handles of a [`DistNet`]'s trainable tensors.
#[derive(Clone, Debug)]
pub struct BoundDistNet {
    pub layers: Vec<(Var, Var)>,
    pub bn: Vec<BnAffine>,
}

impl BoundDistNet {
    /// All trainable tensors, in the order of [`DistNet::tensors_mut`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.layers.iter().flat_map(|&(w, b)| [w, b]).collect();
        v.extend(self.bn.iter().flat_map(|a| [a.gamma, a.beta_shift]));
        v
    }

    /// Tensors subject to weight decay.
    pub fn decayed(&self) -> Vec<Var> {
        self.layers.iter().map(|l| l.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistNet {
    pub arch: Architecture,
    pub family: Family,
    pub layers: Vec<Dense>,
    pub batch_norm: Vec<BatchNormState>,
}

impl DistNet {
    /// Weights from N(0, 2/(fan_in + fan_out)), zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, family: Family, rng: &mut R) -> Result<Self> {
        let arch = Architecture::distnet(input_dim);
        arch.validate()?;
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let normal = Normal::new(0.0, (2.0 / (i + o) as f64).sqrt()).expect("valid std");
                Dense::from_fn(i, o, |bias| if bias { 0.0 } else { normal.sample(rng) })
            })
            .collect();
        let batch_norm = arch.hidden.iter().map(|&h| BatchNormState::new(h)).collect();
        Ok(Self { arch, family, layers, batch_norm })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDistNet {
        BoundDistNet {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            bn: self.batch_norm.iter().map(|b| b.bind(tape)).collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            t.push(l.weight.data_mut());
            t.push(l.bias.data_mut());
        }
        for b in &mut self.batch_norm {
            t.push(&mut b.gamma);
            t.push(&mut b.beta_shift);
        }
        t
    }

    /// Forward pass on a tape. Output neurons pass through `exp` with the
    /// exponent clamped to ±[`OUTPUT_EXP_CLAMP`]; for the lognormal the
    /// first neuron is the scale `e^μ`, so μ is the clamped exponent itself.
    pub fn forward(&mut self, tape: &mut Tape, bound: &BoundDistNet, x: Var, training: bool) -> Result<TapeParams> {
        check_input(&self.arch, tape.value(x))?;
        let out = mlp(tape, &bound.layers, &mut self.batch_norm, &bound.bn, x, training, Tape::tanh)?;
        let clamp = |tape: &mut Tape, j: usize| {
            let c = tape.column(out, j);
            let c = tape.clamp_max(c, OUTPUT_EXP_CLAMP);
            tape.clamp_min(c, -OUTPUT_EXP_CLAMP)
        };
        let (z1, z2) = (clamp(tape, 0), clamp(tape, 1));
        let beta1 = match self.family {
            Family::Lognormal => z1,
            Family::InverseGaussian => tape.exp(z1),
        };
        let beta2 = tape.exp(z2);
        Ok(TapeParams { family: self.family, beta1, beta2 })
    }

    /// Eval-mode prediction for each row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<DistParams>> {
        check_input(&self.arch, x)?;
        let mut tape = Tape::new();
        let bound = BoundDistNet {
            layers: self.layers.iter().map(|l| l.constants(&mut tape)).collect(),
            bn: self.batch_norm.iter().map(|b| b.bind(&mut tape)).collect(),
        };
        let xv = tape.constant(x.clone());
        let mut copy = self.clone();
        let tp = copy.forward(&mut tape, &bound, xv, false)?;
        tp.rows(&tape)
    }
}

/// Scale-mixture prior α·N(0, σ₁²) + (1 − α)·N(0, σ₂²) over every weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { alpha: 0.5, sigma1: 0.3, sigma2: 0.01 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.sigma1 > self.sigma2 && self.sigma2 > 0.0) {
            return Err(contract(format!("invalid prior {self:?}")));
        }
        Ok(())
    }

    /// `ln P(w)` and its derivative.
    pub fn log_density(&self, w: f64) -> (f64, f64) {
        let comp = |s: f64| -s.ln() - LN_SQRT_2PI - 0.5 * (w / s) * (w / s);
        let a = self.alpha.ln() + comp(self.sigma1);
        let b = (1.0 - self.alpha).ln() + comp(self.sigma2);
        let lp = log_add_exp(a, b);
        let ra = if a == f64::NEG_INFINITY { 0.0 } else { (a - lp).exp() };
        let rb = if b == f64::NEG_INFINITY { 0.0 } else { (b - lp).exp() };
        let d = -w * (ra / (self.sigma1 * self.sigma1) + rb / (self.sigma2 * self.sigma2));
        (lp, d)
    }
}

/// Standard-normal noise for one draw of every Bayes weight and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightNoise(pub Vec<Dense>);

/// Tape handles of a [`BayesNet`]'s trainable tensors.
#[derive(Clone, Debug)]
pub struct BoundBayes {
    pub mu: Vec<(Var, Var)>,
    pub rho: Vec<(Var, Var)>,
    pub bn: Vec<BnAffine>,
}

impl BoundBayes {
    /// All trainable tensors, in the order of [`BayesNet::tensors_mut`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.mu.iter().chain(&self.rho).flat_map(|&(w, b)| [w, b]).collect();
        v.extend(self.bn.iter().flat_map(|a| [a.gamma, a.beta_shift]));
        v
    }

    /// Posterior means of the weight matrices.
    pub fn decayed(&self) -> Vec<Var> {
        self.mu.iter().map(|l| l.0).collect()
    }
}

/// One weight sample on a tape together with `ln q(w|θ)` and `ln P(w)`.
#[derive(Clone, Debug)]
pub struct SampledWeights {
    pub layers: Vec<(Var, Var)>,
    pub log_q: Var,
    pub log_p: Var,
}

/// Variational parameters θ = (μ, ρ) with σ = softplus(ρ), plus the
/// deterministic batch-norm layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesNet {
    pub arch: Architecture,
    pub family: Family,
    pub prior: PriorConfig,
    pub mu: Vec<Dense>,
    pub rho: Vec<Dense>,
    pub batch_norm: Vec<BatchNormState>,
}

pub const INIT_MU_STD: f64 = 0.1;
pub const INIT_RHO_MEAN: f64 = -3.0;
pub const INIT_RHO_STD: f64 = 0.1;

impl BayesNet {
    /// μ ~ N(0, 0.1²), ρ ~ N(−3, 0.1²).
    pub fn init<R: Rng + ?Sized>(input_dim: usize, family: Family, prior: PriorConfig, rng: &mut R) -> Result<Self> {
        let arch = Architecture::bayes(input_dim);
        arch.validate()?;
        prior.validate()?;
        let mu_d = Normal::new(0.0, INIT_MU_STD).expect("valid std");
        let rho_d = Normal::new(INIT_RHO_MEAN, INIT_RHO_STD).expect("valid std");
        let shapes = arch.layer_shapes();
        let mu = shapes.iter().map(|&(i, o)| Dense::from_fn(i, o, |_| mu_d.sample(rng))).collect();
        let rho = shapes.iter().map(|&(i, o)| Dense::from_fn(i, o, |_| rho_d.sample(rng))).collect();
        let batch_norm = arch.hidden.iter().map(|&h| BatchNormState::new(h)).collect();
        Ok(Self { arch, family, prior, mu, rho, batch_norm })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundBayes {
        BoundBayes {
            mu: self.mu.iter().map(|l| l.bind(tape)).collect(),
            rho: self.rho.iter().map(|l| l.bind(tape)).collect(),
            bn: self.batch_norm.iter().map(|b| b.bind(tape)).collect(),
        }
    }

    fn bind_constant(&self, tape: &mut Tape) -> BoundBayes {
        BoundBayes {
            mu: self.mu.iter().map(|l| l.constants(tape)).collect(),
            rho: self.rho.iter().map(|l| l.constants(tape)).collect(),
            bn: self.batch_norm.iter().map(|b| b.bind(tape)).collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = Vec::new();
        for l in self.mu.iter_mut().chain(self.rho.iter_mut()) {
            t.push(l.weight.data_mut());
            t.push(l.bias.data_mut());
        }
        for b in &mut self.batch_norm {
            t.push(&mut b.gamma);
            t.push(&mut b.beta_shift);
        }
        t
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightNoise {
        WeightNoise(
            self.mu
                .iter()
                .map(|l| {
                    let (i, o) = l.weight.shape();
                    Dense::from_fn(i, o, |_| rng.sample(StandardNormal))
                })
                .collect(),
        )
    }

    /// w = μ + softplus(ρ)∘ε, with `ln q` and `ln P` summed over every
    /// weight and bias.
    pub fn sample_on_tape(&self, tape: &mut Tape, bound: &BoundBayes, noise: &WeightNoise) -> Result<SampledWeights> {
        let mut layers = Vec::with_capacity(bound.mu.len());
        let mut log_q = None::<Var>;
        let mut log_p = None::<Var>;
        let prior = self.prior;
        let pairs = bound.mu.iter().zip(&bound.rho).zip(&noise.0);
        for ((&(mw, mb), &(rw, rb)), eps) in pairs {
            let mut layer = [mw; 2];
            for (k, (mu, rho, e)) in [(mw, rw, &eps.weight), (mb, rb, &eps.bias)].into_iter().enumerate() {
                let sigma = tape.softplus(rho);
                let e = tape.constant(e.clone());
                let se = tape.mul(sigma, e);
                let w = tape.add(mu, se);
                let lq = tape.map_n(&[w, mu, sigma], |a| {
                    let (w, m, s) = (a[0], a[1], a[2]);
                    let d = (w - m) / s;
                    let v = -s.ln() - LN_SQRT_2PI - 0.5 * d * d;
                    Ok((v, vec![-d / s, d / s, (d * d - 1.0) / s]))
                })?;
                let lp = tape.unary(w, |w| prior.log_density(w));
                let (lq, lp) = (tape.sum(lq), tape.sum(lp));
                log_q = Some(match log_q {
                    Some(acc) => tape.add(acc, lq),
                    None => lq,
                });
                log_p = Some(match log_p {
                    Some(acc) => tape.add(acc, lp),
                    None => lp,
                });
                layer[k] = w;
            }
            layers.push((layer[0], layer[1]));
        }
        Ok(SampledWeights { layers, log_q: log_q.expect("layers"), log_p: log_p.expect("layers") })
    }

    /// Value-only weight sample: the concrete layers, `ln q(w|θ)`, `ln P(w)`.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<Dense>, f64, f64)> {
        let mut tape = Tape::new();
        let bound = self.bind_constant(&mut tape);
        let noise = self.draw_noise(rng);
        let s = self.sample_on_tape(&mut tape, &bound, &noise)?;
        let layers = s
            .layers
            .iter()
            .map(|&(w, b)| Dense { weight: tape.value(w).clone(), bias: tape.value(b).clone() })
            .collect();
        Ok((layers, tape.scalar_value(s.log_q), tape.scalar_value(s.log_p)))
    }

    /// One stochastic pass with already sampled weights; returns `rows×1`
    /// predicted runtimes.
    pub fn forward_sampled(
        &mut self,
        tape: &mut Tape,
        bound: &BoundBayes,
        weights: &[(Var, Var)],
        x: Var,
        training: bool,
    ) -> Result<Var> {
        check_input(&self.arch, tape.value(x))?;
        let out = mlp(tape, weights, &mut self.batch_norm, &bound.bn, x, training, Tape::softplus)?;
        let y = tape.softplus(out);
        Ok(tape.clamp_min(y, MIN_RUNTIME_OUTPUT))
    }

    /// One stochastic forward pass: a fresh weight draw shared by every
    /// row of `x`.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Matrix, rng: &mut R, training: bool) -> Result<Vec<f64>> {
        check_input(&self.arch, x)?;
        let mut tape = Tape::new();
        let bound = self.bind_constant(&mut tape);
        let noise = self.draw_noise(rng);
        let s = self.sample_on_tape(&mut tape, &bound, &noise)?;
        let xv = tape.constant(x.clone());
        let y = self.forward_sampled(&mut tape, &bound, &s.layers, xv, training)?;
        Ok(tape.value(y).data().to_vec())
    }

    /// Posterior predictive RTD per row of `x`: `n` eval-mode passes, the
    /// MLE of the configured family, and the empirical quartiles.
    pub fn predictive_rtd<R: Rng + ?Sized>(&self, x: &Matrix, n: usize, rng: &mut R) -> Result<Vec<Predictive>> {
        if n < 2 {
            return Err(contract(format!("predictive distribution needs at least 2 samples, got {n}")));
        }
        check_input(&self.arch, x)?;
        let mut copy = self.clone();
        let mut columns = Vec::with_capacity(n);
        for _ in 0..n {
            columns.push(copy.forward(x, rng, false)?);
        }
        (0..x.rows())
            .map(|i| {
                let samples: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                let params = mle(self.family, &samples)?;
                let quartiles = quartiles(&samples);
                Ok(Predictive { samples, params, quartiles })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictive {
    pub samples: Vec<f64>,
    pub params: DistParams,
    /// 25%, 50% and 75% empirical quantiles of `samples`.
    pub quartiles: [f64; 3],
}

/// Linearly interpolated empirical quantile of an ascending slice.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(samples: &[f64]) -> [f64; 3] {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    [empirical_quantile(&s, 0.25), empirical_quantile(&s, 0.5), empirical_quantile(&s, 0.75)]
}

/// Posterior standard deviation for a given ρ.
pub fn sigma_of_rho(rho: f64) -> f64 {
    softplus(rho)
}

/// dσ/dρ.
pub fn sigma_of_rho_deriv(rho: f64) -> f64 {
    sigmoid(rho)
}
