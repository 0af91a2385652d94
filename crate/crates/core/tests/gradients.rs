//! Reverse-mode gradients checked against central finite differences.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rtdnet::diffmath::{Matrix, Tape, Var};
use rtdnet::dist::{DistParams, Family};
use rtdnet::loss::{bayes_loss, distnet_loss, ComplexityNorm, Observation};
use rtdnet::net::{BayesNet, DistNet, PriorConfig, WeightNoise};
use rtdnet::rng::{self, Rng as StreamRng};

const H: f64 = 1e-5;

/// ‖a − f‖ / max(‖a‖, ‖f‖)
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, f)| a - f).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `loss` with respect to every entry of every
/// tensor handed out by `tensors`.
fn numeric_grad<N>(
    net: &mut N,
    tensors: fn(&mut N) -> Vec<&mut [f64]>,
    loss: &mut dyn FnMut(&mut N) -> f64,
) -> Vec<f64> {
    let shape: Vec<usize> = tensors(net).iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (ti, &len) in shape.iter().enumerate() {
        for k in 0..len {
            let orig = tensors(net)[ti][k];
            tensors(net)[ti][k] = orig + H;
            let up = loss(net);
            tensors(net)[ti][k] = orig - H;
            let down = loss(net);
            tensors(net)[ti][k] = orig;
            out.push((up - down) / (2.0 * H));
        }
    }
    out
}

fn flat_grads(tape: &Tape, vars: &[Var]) -> Vec<f64> {
    vars.iter().flat_map(|&v| tape.grad(v).expect("leaf has a gradient").data().to_vec()).collect()
}

fn random_matrix(rows: usize, cols: usize, r: &mut StreamRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn random_obs(n: usize, r: &mut StreamRng) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            let t = (0.4 * r.sample::<f64, _>(StandardNormal) - 1.5).exp();
            if r.random::<f64>() < 0.3 {
                Observation::censored(t)
            } else {
                Observation::observed(t)
            }
        })
        .collect()
}

/// Pushes the parameters off their symmetric initial values so batch-norm
/// affine terms carry nonzero gradients too.
fn jitter(tensors: Vec<&mut [f64]>, r: &mut StreamRng) {
    let n = Normal::new(0.0, 0.05).unwrap();
    for t in tensors {
        for v in t.iter_mut() {
            *v += n.sample(r);
        }
    }
}

#[test]
fn primitive_network_sum_of_outputs() {
    let mut r = rng::stream(11, "primitive-net", 0);
    let shapes = [(10, 16), (16, 16), (16, 1)];
    let params: Vec<Matrix> = shapes
        .iter()
        .flat_map(|&(i, o)| [random_matrix(i, o, &mut r).map(|w| 0.4 * w), random_matrix(1, o, &mut r)])
        .collect();
    let x = random_matrix(5, 10, &mut r);

    let forward = |tape: &mut Tape, ps: &[Var]| -> Var {
        let mut h = tape.constant(x.clone());
        for (l, pair) in ps.chunks(2).enumerate() {
            let z = tape.matmul(h, pair[0]);
            let z = tape.add_row(z, pair[1]);
            h = match l {
                0 => tape.tanh(z),
                1 => tape.softplus(z),
                _ => tape.exp(z),
            };
        }
        tape.sum(h)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = forward(&mut tape, &vars);
    tape.backward(root).unwrap();
    let analytic = flat_grads(&tape, &vars);

    let mut numeric = Vec::new();
    for pi in 0..params.len() {
        for k in 0..params[pi].len() {
            let eval = |delta: f64| {
                let mut ps = params.clone();
                ps[pi].data_mut()[k] += delta;
                let mut t = Tape::new();
                let vs: Vec<Var> = ps.into_iter().map(|p| t.leaf(p)).collect();
                let root = forward(&mut t, &vs);
                t.scalar_value(root)
            };
            numeric.push((eval(H) - eval(-H)) / (2.0 * H));
        }
    }
    let e = rel_err(&analytic, &numeric);
    assert!(e < 1e-4, "relative error {e}");
    for (a, f) in analytic.iter().zip(&numeric) {
        assert!((a - f).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {f}");
    }
}

#[test]
fn elementwise_primitives() {
    type Op = fn(&mut Tape, Var) -> Var;
    let ops: [(&str, Op, f64); 8] = [
        ("tanh", |t, v| t.tanh(v), 0.3),
        ("exp", |t, v| t.exp(v), -0.7),
        ("ln", |t, v| t.ln(v).unwrap(), 1.7),
        ("softplus", |t, v| t.softplus(v), -1.2),
        ("square", |t, v| t.square(v), 0.9),
        ("recip", |t, v| t.recip(v).unwrap(), 2.5),
        ("sqrt", |t, v| t.sqrt(v).unwrap(), 0.8),
        ("erf", |t, v| t.erf(v), 0.45),
    ];
    for (name, op, x) in ops {
        let mut t = Tape::new();
        let v = t.leaf(Matrix::scalar(x));
        let y = op(&mut t, v);
        t.backward(y).unwrap();
        let analytic = t.grad(v).unwrap().get(0, 0);
        let at = |x: f64| {
            let mut t = Tape::new();
            let v = t.leaf(Matrix::scalar(x));
            let y = op(&mut t, v);
            t.scalar_value(y)
        };
        let numeric = (at(x + H) - at(x - H)) / (2.0 * H);
        assert!((analytic - numeric).abs() < 1e-8 * analytic.abs().max(1.0), "{name}: {analytic} vs {numeric}");
    }
}

#[test]
fn distribution_log_density_gradients() {
    let cases = [
        DistParams::lognormal(-0.4, 0.7).unwrap(),
        DistParams::lognormal(1.2, 1.9).unwrap(),
        DistParams::inverse_gaussian(0.8, 3.0).unwrap(),
        DistParams::inverse_gaussian(2.0, 0.5).unwrap(),
    ];
    for p in cases {
        let [b1, b2] = p.beta();
        for t in [0.2, 0.9, 3.5] {
            for survival in [false, true] {
                let f = |b1: f64, b2: f64, t: f64| {
                    let q = DistParams::from_beta(p.family(), [b1, b2]).unwrap();
                    if survival {
                        q.log_survival(t).unwrap()
                    } else {
                        q.log_pdf(t).unwrap()
                    }
                };
                let (v, g) = if survival { p.log_survival_grad(t) } else { p.log_pdf_grad(t) }.unwrap();
                assert!((v - f(b1, b2, t)).abs() < 1e-13);
                let numeric = [
                    (f(b1 + H, b2, t) - f(b1 - H, b2, t)) / (2.0 * H),
                    (f(b1, b2 + H, t) - f(b1, b2 - H, t)) / (2.0 * H),
                    (f(b1, b2, t + H) - f(b1, b2, t - H)) / (2.0 * H),
                ];
                assert!(rel_err(&g, &numeric) < 1e-6, "{p:?} t={t} survival={survival}: {g:?} vs {numeric:?}");
            }
        }
    }
}

fn distnet_case(seed: u64) {
    let mut r = rng::stream(seed, "distnet-fd", 0);
    let family = if seed.is_multiple_of(2) { Family::Lognormal } else { Family::InverseGaussian };
    let m = 2 + (seed % 4) as usize;
    let rows = 4 + (seed % 5) as usize;
    let mut net = DistNet::init(m, family, &mut r).unwrap();
    jitter(net.tensors_mut(), &mut r);
    let x = random_matrix(rows, m, &mut r);
    let obs = random_obs(rows, &mut r);
    let l2 = 1e-2;

    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let parts = distnet_loss(&mut net, &mut tape, &bound, xv, &obs, l2, true).unwrap();
    assert_eq!(parts.floor_hits, 0);
    tape.backward(parts.total).unwrap();
    let analytic = flat_grads(&tape, &bound.vars());

    let numeric = numeric_grad(&mut net, DistNet::tensors_mut, &mut |n: &mut DistNet| {
        let mut t = Tape::new();
        let b = n.bind(&mut t);
        let xv = t.constant(x.clone());
        let p = distnet_loss(n, &mut t, &b, xv, &obs, l2, true).unwrap();
        t.scalar_value(p.total)
    });
    let e = rel_err(&analytic, &numeric);
    assert!(e < 1e-4, "seed {seed}: relative error {e}");
}

fn bayes_case(seed: u64) {
    let mut r = rng::stream(seed, "bayes-fd", 0);
    let family = if seed.is_multiple_of(2) { Family::InverseGaussian } else { Family::Lognormal };
    let m = 3;
    let rows = 5;
    let mut net = BayesNet::init(m, family, PriorConfig::default(), &mut r).unwrap();
    let x = random_matrix(rows, m, &mut r);
    let obs = random_obs(rows, &mut r);
    let noise: Vec<WeightNoise> = (0..4).map(|_| net.draw_noise(&mut r)).collect();
    let norm = if seed.is_multiple_of(3) { ComplexityNorm::Sum } else { ComplexityNorm::Mean };
    let (kl_weight, l2) = (0.25, 1e-2);

    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let parts = bayes_loss(&mut net, &mut tape, &bound, xv, &obs, &noise, kl_weight, norm, l2, true).unwrap();
    assert_eq!(parts.floor_hits, 0);
    tape.backward(parts.total).unwrap();
    let analytic = flat_grads(&tape, &bound.vars());

    let numeric = numeric_grad(&mut net, BayesNet::tensors_mut, &mut |n: &mut BayesNet| {
        let mut t = Tape::new();
        let b = n.bind(&mut t);
        let xv = t.constant(x.clone());
        let p = bayes_loss(n, &mut t, &b, xv, &obs, &noise, kl_weight, norm, l2, true).unwrap();
        t.scalar_value(p.total)
    });
    let e = rel_err(&analytic, &numeric);
    assert!(e < 1e-4, "seed {seed}: relative error {e}");
}

#[test]
fn distnet_objective_matches_finite_differences() {
    for seed in 0..6 {
        distnet_case(seed);
    }
}

#[test]
fn bayes_objective_matches_finite_differences() {
    for seed in 0..4 {
        bayes_case(seed);
    }
}

#[test]
fn log_q_gradient_wrt_mu() {
    let net = BayesNet::init(2, Family::Lognormal, PriorConfig::default(), &mut rng::stream(4, "i", 0)).unwrap();
    let noise = net.draw_noise(&mut rng::stream(4, "n", 0));
    let log_q = |n: &BayesNet, grad: bool| {
        let mut t = Tape::new();
        let b = n.bind(&mut t);
        let s = n.sample_on_tape(&mut t, &b, &noise).unwrap();
        let v = t.scalar_value(s.log_q);
        if grad {
            t.backward(s.log_q).unwrap();
            (v, Some(t.grad(b.mu[0].0).unwrap().clone()))
        } else {
            (v, None)
        }
    };
    let (_, g) = log_q(&net, true);
    let g = g.unwrap();
    for k in 0..net.mu[0].weight.len() {
        let mut up = net.clone();
        up.mu[0].weight.data_mut()[k] += H;
        let mut down = net.clone();
        down.mu[0].weight.data_mut()[k] -= H;
        let numeric = (log_q(&up, false).0 - log_q(&down, false).0) / (2.0 * H);
        assert!((g.data()[k] - numeric).abs() < 1e-6 * numeric.abs().max(1.0), "{} vs {numeric}", g.data()[k]);
    }
}
