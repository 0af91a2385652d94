//! Drives the `rtdnet` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rtdnet::eval::validate_metrics_json;

fn rtdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtdnet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rtdnet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 6] = ["--max-epochs", "8", "--patience", "4", "--mc-samples", "4"];

fn gen(dir: &Path, scenario: &str, seed: &str) {
    ok(&["gen", scenario, "--instances", "20", "--obs", "24", "--features", "3", "--seed", seed, "--out", s(dir)]);
}

fn train(data: &Path, model: &str, dist: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--model", model, "--dist", dist, "--data", s(data), "--out", s(out)];
    args.extend(QUICK);
    args.extend(extra);
    rtdnet(&args)
}

#[test]
fn gen_is_byte_identical_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    gen(&a, "invgauss-synth", "4");
    gen(&b, "invgauss-synth", "4");
    gen(&c, "invgauss-synth", "5");
    for f in ["instances.csv", "runtimes.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("runtimes.csv")).unwrap(), fs::read(c.join("runtimes.csv")).unwrap());
}

#[test]
fn train_eval_predict_adversarial_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen(&data, "lognormal-synth", "1");
    for model in ["distnet", "bayes"] {
        let m1 = t.path().join(format!("{model}1.json"));
        let m2 = t.path().join(format!("{model}2.json"));
        for m in [&m1, &m2] {
            let out = train(&data, model, "lognormal", m, &["--censoring", "0.2", "--seed", "3"]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
        assert_eq!(
            fs::read(m1.with_extension("curve.csv")).unwrap(),
            fs::read(m2.with_extension("curve.csv")).unwrap()
        );
        let curve = fs::read_to_string(m1.with_extension("curve.csv")).unwrap();
        assert!(curve.lines().count() >= 2);

        let metrics = t.path().join(format!("{model}-metrics.json"));
        ok(&["eval", "--model", s(&m1), "--data", s(&data), "--out", s(&metrics)]);
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
        validate_metrics_json(&doc).unwrap();
        assert_eq!(doc[0]["axis"], "censoring");
        assert_eq!(doc[0]["axis_value"], 0.2);
        assert_eq!(doc[0]["scenario"], "data");

        let pred = ok(&["predict", "--model", s(&m1), "--features", "0.5,-1,0.25"]);
        let v: serde_json::Value = serde_json::from_slice(&pred.stdout).unwrap();
        let q: Vec<f64> = ["q25", "q50", "q75"].iter().map(|k| v[k].as_f64().unwrap()).collect();
        assert!(0.0 < q[0] && q[0] <= q[1] && q[1] <= q[2], "{q:?}");
        assert_eq!(pred.stdout, ok(&["predict", "--model", s(&m1), "--features", "0.5,-1,0.25"]).stdout);

        let shifts = t.path().join(format!("{model}-shifts.csv"));
        ok(&[
            "adversarial",
            "--model",
            s(&m1),
            "--data",
            s(&data),
            "--instance",
            "inst0003",
            "--shifts",
            "-2:2:1",
            "--out",
            s(&shifts),
        ]);
        assert_eq!(fs::read_to_string(&shifts).unwrap().lines().count(), 6);
    }
}

#[test]
fn sweep_writes_valid_reports_deterministically() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen(&data, "lognormal-synth", "2");
    let run = |out: &Path| {
        let mut args = vec![
            "sweep",
            "--data",
            s(&data),
            "--axis",
            "obs_per_instance",
            "--values",
            "2,4",
            "--seeds",
            "1",
            "--models",
            "distnet,bayes",
            "--dists",
            "lognormal",
            "--folds",
            "5",
            "--fold-limit",
            "2",
            "--out",
            s(out),
        ];
        args.extend(QUICK);
        ok(&args);
    };
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    run(&a);
    run(&b);
    for f in ["metrics.json", "report.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("metrics.json")).unwrap()).unwrap();
    validate_metrics_json(&doc).unwrap();
    assert_eq!(doc.as_array().unwrap().len(), 2 * 2 * 2);
    // header plus one row per (model, value)
    assert_eq!(fs::read_to_string(a.join("report.csv")).unwrap().lines().count(), 1 + 2 * 2);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen(&data, "lognormal-synth", "1");
    let model = t.path().join("m.json");

    assert_eq!(rtdnet(&["gen", "lognormal-synth", "--obs", "0", "--out", s(&data)]).status.code(), Some(2));
    assert_eq!(rtdnet(&["gen", "no-such-scenario", "--out", s(&data)]).status.code(), Some(2));
    assert_eq!(rtdnet(&["frobnicate"]).status.code(), Some(2));
    let missing = t.path().join("missing");
    assert_eq!(train(&missing, "distnet", "lognormal", &model, &[]).status.code(), Some(2));
    assert_eq!(train(&data, "distnet", "lognormal", &model, &["--censoring", "1.5"]).status.code(), Some(2));

    for kind in ["distnet", "bayes"] {
        let out = train(&data, kind, "lognormal", &model, &["--lr", "1e300", "--grad-clip", "1e300"]);
        assert_eq!(out.status.code(), Some(3), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
    }

    assert!(train(&data, "distnet", "lognormal", &model, &[]).status.success());
    assert_eq!(rtdnet(&["predict", "--model", s(&model), "--features", "1,2"]).status.code(), Some(2));
    assert_eq!(rtdnet(&["predict", "--model", s(&model), "--features", "1,x,2"]).status.code(), Some(2));
    let shifts = t.path().join("s.csv");
    let adv = ["adversarial", "--model", s(&model), "--data", s(&data), "--instance", "nope", "--out", s(&shifts)];
    assert_eq!(rtdnet(&adv).status.code(), Some(2));
    let corrupt = t.path().join("corrupt.json");
    fs::write(&corrupt, "{\"schema_version\": 1}").unwrap();
    assert_eq!(rtdnet(&["predict", "--model", s(&corrupt), "--features", "1,2,3"]).status.code(), Some(2));
}
