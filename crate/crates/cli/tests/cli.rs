use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TWO_POINT: &str = r#"[model]
dimension = 1
kappa0 = 2.0
family = { type = "scalar_two_point", atoms = [2.0, 0.5], weights = [0.3, 0.7] }
q = { type = "constant", value = [1.0] }
"#;

/// Small sample sizes so every stage runs in about a second.
const QUICK: &str = r#"
[audit]
n_samples = 10000

[lyapunov]
n_steps = 2000
n_chains = 4

[chain]
n_steps = 20000

[tail]
n_samples = 20000
n_pairs = 5000

[regen]
n_steps = 20000
"#;

fn kesten(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kesten"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn audit_passes_on_two_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TWO_POINT);
    let out = dir.path().join("out");
    let o = kesten(&["audit", "--seed", "1"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(out.join("audit.json"));
    assert_eq!(report["overall"], "pass");
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["verdict"] == "pass"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall: Pass"));
}

#[test]
fn audit_fails_without_q() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &TWO_POINT.replace("value = [1.0]", "value = [0.0]"),
    );
    let out = dir.path().join("out");
    let o = kesten(&["audit", "--seed", "1"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("A7"), "{}", stderr(&o));
    let report = json(out.join("audit.json"));
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["assumption"] == "A7" && c["verdict"] == "fail"));
    assert!(checks
        .iter()
        .filter(|c| c["assumption"] != "A7")
        .all(|c| c["verdict"] == "pass"));
    let manifest = json(out.join("manifest.json"));
    assert_eq!(manifest["complete"], false);
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = TWO_POINT.replace("kappa0 = 2.0", "kappa0 = = 2.0");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = kesten(&["audit", "--seed", "1"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let text = TWO_POINT.replace("weights = [0.3, 0.7]", "weights = [0.3, 0.9]");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = kesten(&["kappa", "--seed", "1"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TWO_POINT);
    // no --seed
    let o = kesten(&["kappa"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let o = kesten(
        &["kappa", "--seed", "1", "--workers", "0"],
        &cfg,
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = kesten(
        &["kappa", "--seed", "1"],
        &dir.path().join("missing.toml"),
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_kesten"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn kappa_two_point_and_lognormal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TWO_POINT);
    let out = dir.path().join("tp");
    let o = kesten(&["kappa", "--seed", "3"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let k = json(out.join("kappa.json"));
    assert!((k["kappa"].as_f64().unwrap() - (7.0f64 / 3.0).log2()).abs() <= root_error(&k));
    assert!(out.join("rho_curve.csv").exists() && out.join("r.csv").exists());

    let lognormal = r#"[model]
dimension = 1
kappa0 = 2.0
family = { type = "scalar_lognormal", mu = -0.5, sigma = 1.0 }
q = { type = "constant", value = [1.0] }
"#;
    let cfg = write_config(dir.path(), "l.toml", lognormal);
    let out = dir.path().join("ln");
    let o = kesten(&["kappa", "--seed", "3"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let k = json(out.join("kappa.json"));
    assert!((k["kappa"].as_f64().unwrap() - 1.0).abs() <= root_error(&k));
}

/// The root tolerance bounds `|log ρ(κ)|`; it moves `κ` by at most that over the slope.
fn root_error(k: &Value) -> f64 {
    1e-9 / k["slope"].as_f64().unwrap().abs()
}

#[test]
fn kappa0_below_the_root_is_a_bracketing_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &TWO_POINT.replace("kappa0 = 2.0", "kappa0 = 1.0"));
    let out = dir.path().join("out");
    let o = kesten(&["kappa", "--seed", "1"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kappa0"), "{}", stderr(&o));
    let k = json(out.join("kappa.json"));
    assert!(k["error"].is_string());
    assert!(!k["rho_curve"].as_array().unwrap().is_empty());
    let curve = fs::read_to_string(out.join("rho_curve.csv")).unwrap();
    assert!(curve.lines().filter(|l| !l.starts_with('#')).count() > 2);
}

#[test]
fn tail_computes_missing_kappa_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{TWO_POINT}{QUICK}"));
    let out = dir.path().join("out");
    let o = kesten(&["tail", "--seed", "5"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "kappa.json",
        "r.csv",
        "rho_curve.csv",
        "stationary.csv",
        "tail_report.json",
        "survival.csv",
        "hill.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = json(out.join("tail_report.json"));
    let inputs = report["provenance"]["inputs"].as_array().unwrap();
    let kappa_bytes = fs::read(out.join("kappa.json")).unwrap();
    let kappa_ref = inputs.iter().find(|i| i["file"] == "kappa.json").unwrap();
    assert_eq!(kappa_ref["sha256"].as_str().unwrap(), hex_sha256(&kappa_bytes));

    // a second run with other tail settings reuses the κ files untouched
    let o = kesten(&["tail", "--seed", "5", "--samples", "15000"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("from existing artifacts"));
    assert_eq!(fs::read(out.join("kappa.json")).unwrap(), kappa_bytes);
}

fn hex_sha256(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn regen_writes_trace_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let similarity = r#"[model]
dimension = 2
kappa0 = 2.0
family = { type = "similarity", scale = { law = "lognormal", mu = -0.5, sigma = 1.0 }, rotation = { law = "haar" } }
q = { type = "gaussian", mean = [0.0, 0.0], sd = 1.0 }

[grid]
resolution = 64

[regen]
n_steps = 20000
p = 0.2
"#;
    let cfg = write_config(dir.path(), "c.toml", similarity);
    let out = dir.path().join("out");
    let o = kesten(&["regen", "--seed", "2"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(out.join("regen.json"));
    assert_eq!(r["kernel"], "haar_similarity");
    assert_eq!(r["pass"], true);
    assert!(r["diagnostics"]["chi_square"]["pass"].as_bool().unwrap());
    let trace = fs::read_to_string(out.join("regen_trace.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,x1,x2,v,coin,regen");
    assert_eq!(rows.len(), 20_002);
}

#[test]
fn expanding_model_stops_after_lyapunov() {
    let dir = tempfile::tempdir().unwrap();
    let text = TWO_POINT.replace(
        "atoms = [2.0, 0.5], weights = [0.3, 0.7]",
        "atoms = [3.0, 0.9], weights = [0.5, 0.5]",
    );
    let cfg = write_config(dir.path(), "c.toml", &format!("{text}{QUICK}"));
    let out = dir.path().join("out");
    let o = kesten(&["pipeline", "--seed", "1"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("kappa.json").exists());
    let p = json(out.join("pipeline.json"));
    let stages = p["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 2);
    assert_eq!(stages[1]["stage"], "lyapunov");
    assert_eq!(stages[1]["status"], "failed");
    let m = json(out.join("manifest.json"));
    assert_eq!(m["complete"], false);
    let files: Vec<&str> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["audit.json", "lyapunov.json", "pipeline.json"]);
}

#[test]
fn pipeline_is_reproducible_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{TWO_POINT}{QUICK}"));
    let runs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    let mut codes = Vec::new();
    for (run, workers) in runs.iter().zip(["1", "1", "3"]) {
        let o = kesten(&["pipeline", "--seed", "42", "--workers", workers], &cfg, run);
        codes.push(o.status.code());
    }
    assert!(
        codes.iter().all(|c| *c == codes[0] && matches!(c, Some(0) | Some(4))),
        "{codes:?}"
    );
    let hash = json(runs[0].join("manifest.json"))["provenance"]["config_sha256"].clone();
    let mut names: Vec<_> = fs::read_dir(&runs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 12, "{names:?}");
    for name in names {
        let a = fs::read(runs[0].join(&name)).unwrap();
        for other in &runs[1..] {
            assert!(
                a == fs::read(other.join(&name)).unwrap(),
                "{name:?} differs in {}",
                other.display()
            );
        }
        let name = name.to_string_lossy().into_owned();
        let text = String::from_utf8(a).unwrap();
        if name.ends_with(".json") {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["provenance"]["seed"], 42, "{name}");
            assert_eq!(v["provenance"]["config_sha256"], hash, "{name}");
        } else {
            assert!(text.starts_with("# kesten "), "{name}");
            assert!(
                text.contains(&format!("# config_sha256 {}", hash.as_str().unwrap())),
                "{name}"
            );
        }
    }
}

#[test]
fn a_different_seed_changes_the_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{TWO_POINT}{QUICK}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    kesten(&["lyapunov", "--seed", "1"], &cfg, &a);
    kesten(&["lyapunov", "--seed", "2"], &cfg, &b);
    let (x, y) = (json(a.join("lyapunov.json")), json(b.join("lyapunov.json")));
    assert_ne!(x["estimate"]["beta"], y["estimate"]["beta"]);
}
