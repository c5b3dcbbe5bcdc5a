use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use crmtlr::cli::{evaluate_bundle, prediction_table, run_args};
use crmtlr::dataset::read_table;
use crmtlr::{AurocNegatives, ModelBundle, Schema};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crmtlr"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["crmtlr"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_args(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sidecar(p: &Path, suffix: &str) -> PathBuf {
    let mut os = p.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

fn simulate(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let data = dir.join(name);
    let (code, _, err) = run(&["simulate", "--out", s(&data), "--n", &n.to_string(), "--seed", &seed.to_string()]);
    assert_eq!(code, 0, "{err}");
    data
}

fn train_linear(data: &Path, model: &Path, epochs: &str) {
    let schema = sidecar(data, ".schema");
    let (code, _, err) = run(&[
        "train", "--data", s(data), "--schema", s(&schema), "--out", s(model), "--linear", "--lr", "0.01",
        "--c1", "0.001", "--epochs", epochs, "--patience", "20", "--seed", "4",
    ]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn binary_runs_the_full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cohort.csv");
    let model = dir.path().join("model.json");
    let preds = dir.path().join("preds.csv");
    let ok = |c: &mut Command| {
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(bin().args(["simulate", "--out", s(&data), "--n", "300", "--seed", "1"]));
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar(&data, ".spec.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 1);
    assert!(sidecar(&data, ".schema").exists());
    ok(bin().args(["train", "--data", s(&data), "--schema", s(&sidecar(&data, ".schema")), "--out", s(&model)])
        .args(["--hidden", "8,8,8", "--epochs", "3"]));
    assert!(sidecar(&model, ".log.csv").exists());
    ok(bin().args(["predict", "--model", s(&model), "--data", s(&data), "--out", s(&preds)]));
    let table = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(table.lines().count(), 301);
    let report = ok(bin().args(["evaluate", "--model", s(&model), "--data", s(&data), "--tau", "0.5"]));
    assert!(report.contains("cindex_1=") && report.contains("auroc_2@0.5="));
}

#[test]
fn same_seed_gives_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 200, 3);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for m in [&a, &b] {
        let (code, _, err) = run(&[
            "train", "--data", s(&data), "--schema", s(&sidecar(&data, ".schema")), "--out", s(m),
            "--hidden", "6,6,6", "--epochs", "2", "--seed", "8",
        ]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_schema_fails_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 20, 1);
    let missing = dir.path().join("nope.schema");
    let (code, _, err) = run(&["train", "--data", s(&data), "--schema", s(&missing), "--out", "m.json"]);
    assert_ne!(code, 0);
    assert!(err.contains(s(&missing)), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["train"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 30, 1);
    let (code, _, _) = run(&[
        "train", "--data", s(&data), "--schema", s(&sidecar(&data, ".schema")), "--out", "m.json", "--lr", "-1",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn empty_data_gives_a_header_only_prediction_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 100, 2);
    let model = dir.path().join("m.json");
    train_linear(&data, &model, "5");
    for (name, content) in [("empty.csv", String::new()), ("header.csv", "id,time,event,x1,x2,x3,x4,x5\n".into())] {
        let input = dir.path().join(name);
        std::fs::write(&input, content).unwrap();
        let out = dir.path().join(format!("{name}.out"));
        let (code, _, err) = run(&["predict", "--model", s(&model), "--data", s(&input), "--out", s(&out)]);
        assert_eq!(code, 0, "{err}");
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("id,cif_1_t1,"));
    }
}

#[test]
fn predict_file_matches_in_memory_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 150, 5);
    let model = dir.path().join("m.json");
    train_linear(&data, &model, "10");
    let out = dir.path().join("p.csv");
    assert_eq!(run(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&out)]).0, 0);

    let bundle = ModelBundle::load(&model).unwrap();
    let schema = Schema::from_file(sidecar(&data, ".schema")).unwrap();
    let rows = read_table(&data, &schema, false).unwrap();
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let n_edges = bundle.grid.edges().len();
    for (row, rec) in rows.iter().zip(reader.records()) {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], row.id);
        let cif = bundle.predict(&bundle.encoding.encode(row).unwrap()).unwrap().cif();
        let mut want: Vec<f64> = Vec::new();
        for e in 1..=2 {
            want.extend_from_slice(&cif.event_curve(e)[..n_edges]);
        }
        want.extend(cif.lifetime_risk());
        let got: Vec<f64> = rec.iter().skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }
    assert_eq!(std::fs::read_to_string(&out).unwrap(), prediction_table(&bundle, &rows).unwrap());

    // CIF values never decrease within an event block
    let mut reader = csv::Reader::from_path(&out).unwrap();
    for rec in reader.records() {
        let v: Vec<f64> = rec.unwrap().iter().skip(1).map(|x| x.parse().unwrap()).collect();
        for block in v[..2 * n_edges].chunks(n_edges) {
            assert!(block.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}

#[test]
fn predict_rejects_data_missing_a_feature_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 60, 5);
    let model = dir.path().join("m.json");
    train_linear(&data, &model, "2");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,time,event,x1,x2
a,1.0,1,0.1,0.2
").unwrap();
    let out = dir.path().join("p.csv");
    let (code, _, err) = run(&["predict", "--model", s(&model), "--data", s(&bad), "--out", s(&out)]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("x3"), "{err}");
    assert!(!out.exists());
}

#[test]
fn single_class_horizon_reports_na() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 100, 6);
    let model = dir.path().join("m.json");
    train_linear(&data, &model, "5");
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let mut only_first = String::from(lines.next().unwrap());
    only_first.push('\n');
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        if cols[2] != "2" {
            only_first.push_str(l);
            only_first.push('\n');
        }
    }
    let filtered = dir.path().join("f.csv");
    std::fs::write(&filtered, only_first).unwrap();
    let (code, out, err) = run(&["evaluate", "--model", s(&model), "--data", s(&filtered), "--tau", "1"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("auroc_2@1=NA"), "{out}");
    assert!(out.contains("cindex_2=NA"), "{out}");
    assert!(out.contains("note: event 2 AUROC is NA: "), "{out}");
    assert!(!out.contains("cindex_1=NA"), "{out}");
}

#[test]
fn gradcheck_passes_and_corruption_exits_three() {
    let (code, out, _) = run(&["gradcheck"]);
    assert_eq!(code, 0);
    assert!(out.trim_end().ends_with("PASS"));
    assert!(out.contains("encoder.weights"));
    assert_eq!(run(&["gradcheck", "--seed", "4"]).1, run(&["gradcheck", "--seed", "4"]).1);
    let (code, out, err) = run(&["gradcheck", "--points", "1", "--corrupt"]);
    assert_eq!(code, 3, "{out}{err}");
}

#[test]
fn evaluate_matches_frozen_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 400, 77);
    let model = dir.path().join("m.json");
    train_linear(&data, &model, "30");
    let (code, out, err) = run(&["evaluate", "--model", s(&model), "--data", s(&data), "--tau", "0.5"]);
    assert_eq!(code, 0, "{err}");
    let frozen = [
        ("cindex_1", 0.719654700494789),
        ("auroc_1@0.5", 0.7674763636363636),
        ("cindex_2", 0.7223120736938331),
        ("auroc_2@0.5", 0.7847258316008316),
    ];
    for (key, want) in frozen {
        let line = out.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap();
        let got: f64 = line.split_once('=').unwrap().1.parse().unwrap();
        assert!((got - want).abs() <= 1e-12, "{key}: {got} vs {want}");
    }
    let bundle = ModelBundle::load(&model).unwrap();
    let report = evaluate_bundle(&bundle, &data, 0.5, AurocNegatives::AllOthers).unwrap();
    assert_eq!(report.cindex[0].value(), Some(frozen[0].1));
}

#[test]
fn linear_training_on_two_thousand_subjects_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "c.csv", 2000, 9);
    let model = dir.path().join("m.json");
    let start = Instant::now();
    train_linear(&data, &model, "100");
    assert!(start.elapsed() < Duration::from_secs(300));
}
