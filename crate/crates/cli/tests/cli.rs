use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GROUP: &str = r#"
[model]
preset = "group_testing"
theta = [0.07, 0.93, 0.96]

[space]
kind = "integers"
start = 1
end = 61

[criterion]
kind = "c"
c = [1.0, 0.0, 0.0]
"#;

fn optdes(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optdes"));
    cmd.args(args).env_remove("OPTDES_THREADS");
    if let Some(t) = threads {
        cmd.env("OPTDES_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn approx_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GROUP);
    let out = dir.path().join("out");
    let o = optdes(&["approx", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["design.csv", "design.json", "report.json", "dprofile.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: optimal"));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("seed = 1\nn = 20\n{GROUP}"));
    let out = dir.path().join("out");
    let o = optdes(
        &["exact", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5", "--n", "12", "--restarts", "2"],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["seed"], 5);
    assert_eq!(r["config"]["n"], 12);
    assert_eq!(r["config"]["anneal"]["restarts"], 2);
    assert_eq!(r["exact"]["n"], 12);
    assert!(out.join("trace_1.csv").exists());
    assert!(!out.join("trace_2.csv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("n = 13\n{GROUP}"));
    let mut designs = Vec::new();
    for threads in ["1", "2", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = optdes(&["exact", "--config", &cfg, "--out", out.to_str().unwrap()], Some(threads));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        designs.push((fs::read(out.join("design.csv")).unwrap(), fs::read(out.join("restarts.csv")).unwrap()));
    }
    assert_eq!(designs[0], designs[1]);
    assert_eq!(designs[0], designs[2]);
}

#[test]
fn app4_requires_external_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = optdes(&["preset", "app4", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(5));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["code"], 5);
    assert_eq!(err["error"], "external_parameters_required");
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(file, err);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let o = optdes(&["approx", "--out", out], None);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), &GROUP.replace("group_testing", "no_such_model"));
    let o = optdes(&["approx", "--config", &cfg, "--out", out], None);
    assert_eq!(o.status.code(), Some(4));

    let o = optdes(&["approx", "--config", "/nonexistent/run.toml", "--out", out], None);
    assert_eq!(o.status.code(), Some(6));

    let cfg = write_config(dir.path(), GROUP);
    let o = optdes(&["approx", "--config", &cfg, "--out", out], Some("0"));
    assert_eq!(o.status.code(), Some(2));

    let o = optdes(&["preset", "app9", "--out", out], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn maximin_without_n_is_approximate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[space]
kind = "grid"
lower = [-1.0]
upper = [1.0]
levels = [21]

[[objectives]]
model = { preset = "poly_linear", theta = [0.0, 0.0, 0.0] }
criterion = { kind = "D" }

[[objectives]]
model = { preset = "poly_linear", theta = [0.0, 0.0] }
criterion = { kind = "c", c = [1.0, 2.0] }
"#,
    );
    let out = dir.path().join("out");
    let o = optdes(&["maximin", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["task"], "maximin_approx");
    assert!(r.get("exact").is_none());
    let design = fs::read_to_string(out.join("design.csv")).unwrap();
    assert!(design.starts_with("x1,weight\n"));
}
