use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
seed = 5

[model]
d = 2
gamma = 4.0
potential = { kind = "quadratic", theta = 1.0 }
rate = { kind = "constant", lambda = 2.0 }
density = { kind = "gaussian" }

[experiment]
t_end = 2.0
n_traj = 50
dt = 0.5
n_mc = 2000
n_probes = 2
overlap_samples = 5000
flow_segments = 20
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn collide(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collide")).arg("--config").arg(cfg).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

#[test]
fn params_succeeds_and_reports_positive_constants() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "base.toml", BASE);
    let o = collide(&cfg, &["params"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["params"]["beta"], 2.0);
    assert!(v["params"]["log_lambda_star"].as_f64().unwrap().is_finite());
    assert!(v["params"]["c_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn infeasible_friction_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", &BASE.replace("gamma = 4.0", "gamma = 2.0"));
    let o = collide(&cfg, &["params"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let cases = [
        BASE.replace("n_traj = 50", "n_traj = 0"),
        BASE.replace("dt = 0.5", "dt = 0.5\nt_grid = [0.0, 3.0]"),
        BASE.replace("gamma = 4.0", "gamma = 4.0\nfriction = 1.0"),
        BASE.replace("lambda = 2.0", "lambda = -2.0"),
        "not toml at all [".to_string(),
    ];
    for (k, text) in cases.iter().enumerate() {
        let cfg = write_config(&dir, &format!("c{k}.toml"), text);
        assert_eq!(code(&collide(&cfg, &["simulate"])), 1, "case {k}");
    }
    assert_eq!(code(&collide(&dir.path().join("missing.toml"), &["params"])), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "base.toml", BASE);
    assert_eq!(code(&collide(&cfg, &["verify", "nonsense"])), 1);
    assert_eq!(code(&collide(&cfg, &["frobnicate"])), 1);
    assert_eq!(code(&collide(&cfg, &["--threads", "0", "params"])), 1);
    let help = Command::new(env!("CARGO_BIN_EXE_collide")).arg("--help").output().unwrap();
    assert_eq!(code(&help), 0);
}

#[test]
fn simulate_csv_schema() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "base.toml", BASE);
    let out = dir.path().join("out");
    let o = collide(&cfg, &["--out", out.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_path(out.join("simulate.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["traj_id", "t", "x_norm", "v_norm"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    // 50 trajectories on t = 0, 0.5, ..., 2
    assert_eq!(rows.len(), 50 * 5);
    assert_eq!(&rows[0][2], "1");
}

#[test]
fn couple_outputs_both_formats() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "base.toml", BASE);
    let out = dir.path().join("out");
    assert_eq!(code(&collide(&cfg, &["--out", out.to_str().unwrap(), "couple"])), 0);
    let mut r = csv::Reader::from_path(out.join("couple.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["traj_id", "t", "x_norm", "v_norm", "r", "FG", "Phi"]);
    assert_eq!(code(&collide(&cfg, &["--out", out.to_str().unwrap(), "--format", "jsonl", "couple"])), 0);
    let text = std::fs::read_to_string(out.join("couple.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let branch = first["branch"].as_str().unwrap();
    assert!(["basic", "reflection", "residual_first", "residual_second"].contains(&branch), "{branch}");
}

#[test]
fn verify_checks_pass_on_small_budget() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "base.toml", BASE);
    for which in ["generator", "coupling", "b2", "marginals", "flow"] {
        let out = dir.path().join(which);
        let o = collide(&cfg, &["--out", out.to_str().unwrap(), "verify", which]);
        assert_eq!(code(&o), 0, "{which}: {}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join(format!("verify_{which}.json"))).unwrap()).unwrap();
        assert_eq!(report["passed"], true, "{which}");
    }
}

#[test]
fn seed_override_changes_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "base.toml", BASE);
    let a = collide(&cfg, &["simulate"]);
    let b = collide(&cfg, &["--seed", "6", "simulate"]);
    let c = collide(&cfg, &["simulate"]);
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}
