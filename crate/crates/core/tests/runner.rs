//! End-to-end runs through the config-driven pipelines.

use std::fs;
use std::path::Path;

use optdes::config::{CriterionSection, ModelSection, SpaceSection, VerifySection};
use optdes::io::{parse_design_csv, read_design};
use optdes::{run, Criterion, ModelSpec, PresetId, RunConfig, Task};

fn group_config(task: Task, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(task);
    cfg.out = Some(out.to_path_buf());
    cfg.model = Some(ModelSection {
        preset: "group_testing".into(),
        theta: vec![0.07, 0.93, 0.96],
    });
    cfg.space = Some(SpaceSection::Integers { start: 1, end: 61 });
    cfg.criterion = Some(CriterionSection::D);
    cfg
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn group_model() -> ModelSpec {
    ModelSpec::new(PresetId::GroupTesting, vec![0.07, 0.93, 0.96]).unwrap()
}

#[test]
fn approx_group_testing_files() {
    let dir = tempfile::tempdir().unwrap();
    run(&group_config(Task::Approx, dir.path())).unwrap();
    let d = read_design(&dir.path().join("design.json")).unwrap().to_approximate().unwrap();
    assert_eq!(d.points(), &[vec![1.0], vec![17.0], vec![61.0]]);
    for w in d.weights() {
        assert!((w - 1.0 / 3.0).abs() < 1e-3);
    }
    let csv = fs::read_to_string(dir.path().join("design.csv")).unwrap();
    assert!(csv.starts_with("x1,weight\n1,0.333"), "{csv}");
    let r = report(dir.path());
    assert_eq!(r["verdict"], "optimal");
    assert!((r["approx"]["loss"].as_f64().unwrap() - 0.1448).abs() < 5e-5);
    let profile = fs::read_to_string(dir.path().join("dprofile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 62);
}

#[test]
fn exact_group_testing_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = group_config(Task::Exact, dir.path());
    cfg.n = Some(12);
    run(&cfg).unwrap();
    let e = read_design(&dir.path().join("design.csv")).unwrap().to_exact().unwrap();
    assert_eq!(e.points(), &[vec![1.0], vec![17.0], vec![61.0]]);
    assert_eq!(e.counts(), &[4, 4, 4]);
    let r = report(dir.path());
    assert!((r["exact"]["modified_efficiency"].as_f64().unwrap() - 1.0).abs() < 5e-5);
    for j in 0..10 {
        assert!(dir.path().join(format!("trace_{j}.csv")).exists());
    }
    let restarts = fs::read_to_string(dir.path().join("restarts.csv")).unwrap();
    assert_eq!(restarts.lines().count(), 11);
    // Every default is materialized in the echoed config.
    assert_eq!(r["config"]["seed"], 42);
    assert_eq!(r["config"]["anneal"]["seed"], 42);
    assert_eq!(r["config"]["anneal"]["restarts"], 10);
    assert_eq!(r["config"]["out"], dir.path().to_str().unwrap());
    assert!(r["exact"]["anneal"]["t0"].as_f64().unwrap() > 0.0);
    assert!(r["timings"]["total_seconds"].as_f64().is_some());
}

#[test]
fn verify_uniform_line_design() {
    let dir = tempfile::tempdir().unwrap();
    let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
    let mut cfg = RunConfig::new(Task::Verify);
    cfg.out = Some(dir.path().to_path_buf());
    cfg.model = Some(ModelSection {
        preset: "poly_linear".into(),
        theta: vec![0.0, 0.0],
    });
    cfg.space = Some(SpaceSection::Finite { points: pts.clone() });
    cfg.criterion = Some(CriterionSection::D);
    cfg.verify = Some(VerifySection {
        design: None,
        points: Some(pts),
        weights: Some(vec![1.0 / 3.0; 3]),
    });
    run(&cfg).unwrap();
    let r = report(dir.path());
    assert!((r["verify"]["max_derivative"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(r["verify"]["verdict"], "not optimal");
    assert_eq!(r["verdict"], "not optimal");
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = group_config(Task::Exact, dir.path());
    cfg.criterion = Some(CriterionSection::C { c: vec![1.0, 0.0, 0.0] });
    cfg.n = Some(13);
    cfg.anneal = Some(optdes::AnnealConfig { restarts: 3, ..Default::default() });
    let summary = run(&cfg).unwrap();
    let model = group_model();
    let c = Criterion::c_optimality(vec![1.0, 0.0, 0.0]).unwrap();

    let approx_loss = summary.report["approx"]["loss"].as_f64().unwrap();
    let a = read_design(&dir.path().join("approx_design.json")).unwrap().to_approximate().unwrap();
    assert!((c.design_loss(&model, &a).unwrap() - approx_loss).abs() <= 1e-12);

    let exact_loss = summary.report["exact"]["loss"].as_f64().unwrap();
    for file in ["design.json", "design.csv"] {
        let e = read_design(&dir.path().join(file)).unwrap().to_exact().unwrap();
        assert!((c.design_loss(&model, &e.to_approximate()).unwrap() - exact_loss).abs() <= 1e-12, "{file}");
    }
    // Six significant digits lose the exact thirds but stay close.
    let csv = parse_design_csv(&fs::read_to_string(dir.path().join("approx_design.csv")).unwrap()).unwrap();
    let rel = (c.design_loss(&model, &csv.to_approximate().unwrap()).unwrap() - approx_loss).abs() / approx_loss;
    assert!(rel < 1e-4, "{rel}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = group_config(Task::Exact, dir.path());
        cfg.criterion = Some(CriterionSection::C { c: vec![1.0, 0.0, 0.0] });
        cfg.n = Some(11);
        run(&cfg).unwrap();
    }
    for f in ["design.csv", "design.json", "approx_design.csv", "restarts.csv", "trace_3.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn maximin_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
task = "maximin_exact"
n = 8
out = "{}"

[space]
kind = "grid"
lower = [-1.0]
upper = [1.0]
levels = [21]

[anneal]
restarts = 4

[[objectives]]
model = {{ preset = "poly_linear", theta = [0.0, 0.0, 0.0] }}
criterion = {{ kind = "D" }}

[[objectives]]
model = {{ preset = "poly_linear", theta = [0.0, 0.0] }}
criterion = {{ kind = "c", c = [1.0, 2.0] }}
"#,
        dir.path().display()
    );
    let cfg = RunConfig::from_toml(&text).unwrap();
    let s = run(&cfg).unwrap();
    let approx_min = s.report["approx"]["min_efficiency"].as_f64().unwrap();
    let exact_min = s.report["exact"]["min_efficiency"].as_f64().unwrap();
    assert!(approx_min > 0.5 && approx_min < 1.0, "{approx_min}");
    assert!(exact_min > 0.0 && exact_min <= approx_min + 1e-9, "{exact_min} vs {approx_min}");
    assert_eq!(s.report["objectives"][0]["reference_source"], "solved");
    let e = read_design(&dir.path().join("design.json")).unwrap().to_exact().unwrap();
    assert_eq!(e.n(), 8);
}

#[test]
fn failures_carry_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    let mut missing_n = group_config(Task::Exact, out);
    missing_n.n = None;
    assert_eq!(run(&missing_n).unwrap_err().code(), 2);

    let mut bad_preset = group_config(Task::Approx, out);
    bad_preset.model.as_mut().unwrap().preset = "quartic".into();
    assert_eq!(run(&bad_preset).unwrap_err().code(), 4);

    let mut bad_theta = group_config(Task::Approx, out);
    bad_theta.model.as_mut().unwrap().theta = vec![0.07, 0.93];
    assert_eq!(run(&bad_theta).unwrap_err().code(), 4);

    let mut infeasible = group_config(Task::Approx, out);
    infeasible.space = Some(SpaceSection::Integers { start: 5, end: 6 });
    assert_eq!(run(&infeasible).unwrap_err().code(), 3);

    let mut no_file = group_config(Task::Verify, out);
    no_file.verify = Some(VerifySection {
        design: Some(out.join("absent.csv")),
        ..Default::default()
    });
    assert_eq!(run(&no_file).unwrap_err().code(), 6);

    let mut mismatch = group_config(Task::Approx, out);
    mismatch.space = Some(SpaceSection::Grid {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        levels: vec![3, 3],
    });
    assert_eq!(run(&mismatch).unwrap_err().code(), 2);
}

#[test]
fn fuzz_seeds_parse() {
    let corpus = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for (dir, parse) in [
        ("design_csv", optdes::io::parse_design_csv as fn(&str) -> Result<_, _>),
        ("design_json", optdes::io::parse_design_json),
    ] {
        for entry in std::fs::read_dir(corpus.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            let ok = parse(&text).is_ok();
            assert_eq!(ok, !path.ends_with("empty.csv"), "{}", path.display());
        }
    }
    for entry in std::fs::read_dir(corpus.join("config_toml")).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        RunConfig::from_toml(&text).unwrap().validate().unwrap();
    }
}
