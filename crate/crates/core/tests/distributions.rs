//! Distribution functions against quadrature, grid search and sampling
//! oracles.

use rand::Rng;
use rtdnet::diffmath::special::std_normal_cdf;
use rtdnet::dist::{mle, DistParams, Family};
use rtdnet::eval::ks_metric;
use rtdnet::rng;

/// Composite Simpson rule on [a, b] with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// ∫₀ᵗ pdf, integrated in log time where the lognormal density is smooth.
fn integrated_cdf(p: &DistParams, t: f64) -> f64 {
    let lo = (p.quantile(1e-14).unwrap()).ln();
    simpson(|u| p.pdf(u.exp()).unwrap() * u.exp(), lo, t.ln(), 20_000)
}

fn test_params() -> Vec<DistParams> {
    vec![
        DistParams::lognormal(0.0, 1.0).unwrap(),
        DistParams::lognormal(-1.3, 0.4).unwrap(),
        DistParams::lognormal(0.7, 1.8).unwrap(),
        DistParams::inverse_gaussian(1.0, 1.0).unwrap(),
        DistParams::inverse_gaussian(2.0, 3.0).unwrap(),
        DistParams::inverse_gaussian(0.3, 12.0).unwrap(),
    ]
}

#[test]
fn standard_normal_cdf_at_196() {
    let numeric = 0.5 + simpson(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(), 0.0, 1.96, 2000);
    assert!((numeric - 0.9750).abs() < 1e-4);
    assert!((std_normal_cdf(1.96) - numeric).abs() < 1e-10);
}

#[test]
fn cdf_matches_integrated_pdf() {
    for p in test_params() {
        for q in [0.05, 0.3, 0.5, 0.8, 0.97] {
            let t = p.quantile(q).unwrap();
            let c = p.cdf(t).unwrap();
            assert!((c - integrated_cdf(&p, t)).abs() < 1e-5, "{p:?} at {t}");
        }
    }
    let ig = DistParams::inverse_gaussian(1.0, 1.0).unwrap();
    for t in [0.5, 1.0, 2.0, 5.0] {
        // plain trapezoid in t, as a second oracle
        let n = 200_000;
        let h = t / n as f64;
        let trap: f64 = (1..n).map(|i| ig.pdf(h * i as f64).unwrap()).sum::<f64>() * h + 0.5 * h * ig.pdf(t).unwrap();
        assert!((ig.cdf(t).unwrap() - trap).abs() < 1e-5, "t={t}");
    }
}

#[test]
fn survival_complements_cdf_and_quantile_inverts() {
    for p in test_params() {
        for i in 1..200 {
            let t = p.quantile(i as f64 / 200.0).unwrap() * (1.0 + 0.01 * (i % 7) as f64);
            let (c, s) = (p.cdf(t).unwrap(), p.survival(t).unwrap());
            assert!((c + s - 1.0).abs() < 1e-12, "{p:?} at {t}");
            assert!(
                (p.log_pdf(t).unwrap() - p.pdf(t).unwrap().ln()).abs() < 1e-12 * p.log_pdf(t).unwrap().abs().max(1.0)
            );
        }
        for q in [1e-6, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0 - 1e-6] {
            let t = p.quantile(q).unwrap();
            assert!((p.cdf(t).unwrap() - q).abs() < 1e-8, "{p:?} q={q}");
        }
    }
    let ig = DistParams::inverse_gaussian(2.0, 3.0).unwrap();
    assert!((ig.cdf(ig.quantile(0.25).unwrap()).unwrap() - 0.25).abs() < 1e-8);
}

#[test]
fn pdf_integrates_to_one() {
    for p in test_params() {
        let lo = p.quantile(1e-12).unwrap().ln();
        let hi = p.quantile(1.0 - 1e-12).unwrap().ln();
        let total = simpson(|u| p.pdf(u.exp()).unwrap() * u.exp(), lo, hi, 20_000);
        assert!((0.999..=1.001).contains(&total), "{p:?}: {total}");
    }
}

fn loglik(p: &DistParams, xs: &[f64]) -> f64 {
    xs.iter().map(|&t| p.log_pdf(t).unwrap()).sum()
}

#[test]
fn mle_beats_every_grid_point() {
    let mut r = rng::stream(5, "mle-grid", 0);
    let grid: Vec<f64> = (0..200).map(|i| 0.8 + 0.4 * i as f64 / 199.0).collect();
    for family in Family::ALL {
        for set in 0..50 {
            let truth = match family {
                Family::Lognormal => DistParams::lognormal(r.random_range(-2.0..2.0), r.random_range(0.2..2.0)),
                Family::InverseGaussian => {
                    DistParams::inverse_gaussian(r.random_range(0.2..3.0), r.random_range(0.5..20.0))
                }
            }
            .unwrap();
            let xs = truth.sample(&mut r, 5 + set % 40);
            let fit = mle(family, &xs).unwrap();
            let best = loglik(&fit, &xs);
            let [b1, b2] = fit.beta();
            let tol = 1e-9 * best.abs().max(1.0);
            for &g1 in &grid {
                for &g2 in &grid {
                    let cand = DistParams::from_beta(family, [b1 * g1, b2 * g2]).unwrap();
                    assert!(loglik(&cand, &xs) <= best + tol, "{family:?} set {set}: grid point beats MLE");
                }
            }
        }
    }
}

#[test]
fn mle_hand_cases_are_exact() {
    let e2 = 2f64.exp();
    match mle(Family::Lognormal, &[1.0, e2]).unwrap() {
        DistParams::Lognormal { mu, sigma } => {
            assert!((mu - 1.0).abs() < 1e-12 && (sigma - 1.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    match mle(Family::InverseGaussian, &[1.0, 2.0]).unwrap() {
        DistParams::InverseGaussian { mean, shape } => {
            assert!((mean - 1.5).abs() < 1e-12 && (shape - 12.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn samples_follow_their_distribution() {
    let mut r = rng::stream(9, "sampling", 0);
    let ln = DistParams::lognormal(0.0, 1.0).unwrap();
    let xs = ln.sample(&mut r, 10_000);
    assert!(ks_metric(&ln, &xs).unwrap() < 0.02);

    let ig = DistParams::inverse_gaussian(1.5, 12.0).unwrap();
    let ys = ig.sample(&mut r, 10_000);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    assert!((mean - 1.5).abs() < 0.05, "mean {mean}");
    assert!(ks_metric(&ig, &ys).unwrap() < 0.02);
}
