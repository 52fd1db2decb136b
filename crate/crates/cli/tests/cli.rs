use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
seed = 11
replications = 6
n = 256
kappa = 0.5
x = 3.0
risk_n = [64, 128]

[penalty]
mode = "fixed"
constant = 1e-5

[family]
kind = "histogram"
truth = [1.6, 0.4, 1.2, 0.8]
bins = [1, 2, 4, 8]
epsilon = 0.1
"#;

fn plsel(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_plsel")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_is_byte_for_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let outs: Vec<_> = ["a", "b"].iter().map(|d| dir.path().join(d)).collect();
    for o in &outs {
        let r = plsel(&["run", &cfg, "--out-dir", o.to_str().unwrap(), "--jobs", "1"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for name in ["ledger.csv", "summary.json", "risk.csv"] {
        let a = std::fs::read(outs[0].join(name)).unwrap();
        let b = std::fs::read(outs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let risk = std::fs::read_to_string(outs[0].join("risk.csv")).unwrap();
    assert_eq!(risk.lines().count(), 4);
}

#[test]
fn seed_and_replication_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    let r = plsel(&["run", &cfg, "--out-dir", out.to_str().unwrap(), "--seed", "3", "--replications", "2"]);
    assert!(r.status.success());
    let ledger = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 3);
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("kappa = 0.5", "kappa = 0.5\nunknown = 1"));
    assert_eq!(plsel(&["run", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &CONFIG.replace("kappa = 0.5", "kappa = 0.0"));
    assert_eq!(plsel(&["calibrate", &cfg]).status.code(), Some(2));
    assert_eq!(plsel(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
    assert_eq!(plsel(&["--jobs", "0", "run", &cfg]).status.code(), Some(2));
}

#[test]
fn report_rechecks_a_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    assert!(plsel(&["run", &cfg, "--out-dir", out.to_str().unwrap()]).status.success());
    let ledger = out.join("ledger.csv");
    let r = plsel(&["report", ledger.to_str().unwrap()]);
    assert!(r.status.success());
    let json: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(json["replications"], 6);
    let freq: f64 = json["selection_frequency"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((freq - 1.0).abs() < 1e-12);

    // flip one violation flag: the row no longer recomputes
    let text = std::fs::read_to_string(&ledger).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let flag = if lines[1].contains(",false,") { (",false,", ",true,") } else { (",true,", ",false,") };
    lines[1] = lines[1].replacen(flag.0, flag.1, 1);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    assert_eq!(plsel(&["report", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn calibrate_writes_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    let r = plsel(&["calibrate", &cfg, "--out-dir", out.to_str().unwrap(), "--replications", "8"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["curve"].as_array().unwrap().len(), 129);
}

#[test]
fn check_lemmas_passes_on_a_small_run() {
    let r = plsel(&["check-lemmas", "--replications", "40", "--pairs", "300"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    let stdout = String::from_utf8(r.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 11);
}
