use plsel_core::harness::ledger::{read_ledger_csv, write_ledger_csv};
use plsel_core::harness::lemmas::check_lemmas;
use plsel_core::harness::{check_ledger, emit_reports, run_experiment, ExperimentConfig, ReportPaths};
use plsel_core::Error;

const HISTOGRAM: &str = r#"
seed = 7
replications = 12
n = 512
kappa = 0.5
x = 2.995732273553991
risk_n = [128]

[penalty]
mode = "fixed"
constant = 1e-6

[family]
kind = "histogram"
truth = [1.6, 0.4, 1.2, 0.8]
bins = [1, 2, 4, 8]
epsilon = 0.1
"#;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

#[test]
fn unknown_keys_are_rejected() {
    let bad = HISTOGRAM.replace("kappa = 0.5", "kappa = 0.5\ncolour = 3");
    assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::InvalidConfig(_))));
    let bad = HISTOGRAM.replace("epsilon = 0.1", "epsilon = 0.1\nbogus = 1");
    assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::InvalidConfig(_))));
}

#[test]
fn invalid_values_fail_validation() {
    for (from, to) in [
        ("kappa = 0.5", "kappa = 1.5"),
        ("epsilon = 0.1", "epsilon = 0.5"),
        ("bins = [1, 2, 4, 8]", "bins = []"),
        ("constant = 1e-6", "constant = -1.0"),
        ("truth = [1.6, 0.4, 1.2, 0.8]", "truth = [1.6, 0.6]"),
    ] {
        let text = HISTOGRAM.replace(from, to);
        assert!(ExperimentConfig::from_toml(&text).is_err(), "{to} accepted");
    }
}

#[test]
fn ledger_rows_are_consistent_and_round_trip() {
    let out = run_experiment(&config(HISTOGRAM)).unwrap();
    assert_eq!(out.ledger.rows.len(), 12);
    assert!(out.ledger.failures.is_empty());
    assert!(out.ledger.rows.iter().all(|r| r.consistent()));
    let mut buf = Vec::new();
    write_ledger_csv(&mut buf, 4, &out.ledger.rows).unwrap();
    let (models, rows) = read_ledger_csv(buf.as_slice()).unwrap();
    assert_eq!(models, 4);
    for (a, b) in rows.iter().zip(&out.ledger.rows) {
        assert_eq!(a, b);
        assert_eq!(a.lhs.to_bits(), b.lhs.to_bits());
        for (x, y) in a.models.iter().zip(&b.models) {
            assert_eq!(x.bound.to_bits(), y.bound.to_bits());
            assert_eq!(x.log_likelihood.to_bits(), y.log_likelihood.to_bits());
        }
    }
    let s = out.ledger.summary();
    assert!((s.selection_frequency.values().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&s.violation_rate));
    assert_eq!(s.inconsistent_rows, 0);
    assert_eq!(out.risk.len(), 2);
    assert_eq!(out.risk[0].n, 128);
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run_experiment(&config(HISTOGRAM)).unwrap();
        emit_reports(&out, &ReportPaths::in_dir(dir.path(), "")).unwrap();
    }
    for name in ["ledger.csv", "summary.json", "risk.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let check = check_ledger(std::fs::File::open(a.path().join("ledger.csv")).unwrap()).unwrap();
    assert_eq!(check.replications, 12);
    assert!(check.inconsistent_rows.is_empty());
}

#[test]
fn empty_ledger_gives_headers_and_zero_replications() {
    let cfg = config(&HISTOGRAM.replace("replications = 12", "replications = 0"));
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&out, &ReportPaths::in_dir(dir.path(), "")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("replication,n,kappa,c,x,selected"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["summary"]["replications"], 0);
}

#[test]
fn doubling_kappa_halves_the_penalty() {
    let a = run_experiment(&config(HISTOGRAM)).unwrap();
    let b = run_experiment(&config(&HISTOGRAM.replace("kappa = 0.5", "kappa = 1.0"))).unwrap();
    for (ra, rb) in a.ledger.rows.iter().zip(&b.ledger.rows) {
        for (ma, mb) in ra.models.iter().zip(&rb.models) {
            assert!((ma.penalty - 2.0 * mb.penalty).abs() <= 1e-15 * ma.penalty);
        }
    }
}

#[test]
fn well_specified_single_model_never_violates() {
    let cfg = config(&HISTOGRAM.replace("bins = [1, 2, 4, 8]", "bins = [4]"));
    let out = run_experiment(&cfg).unwrap();
    for r in &out.ledger.rows {
        assert_eq!(r.selected, 0);
        assert!(r.models[0].loss_inf <= 1e-15);
        assert!(!r.violated);
    }
}

#[test]
fn calibration_runs_on_separate_replications() {
    let text = HISTOGRAM.replace(
        "mode = \"fixed\"\nconstant = 1e-6",
        "mode = \"calibrate\"\nreplications = 10\ngrid = [1e-8, 1e-6, 1e-4, 1e-2]",
    );
    let out = run_experiment(&config(&text)).unwrap();
    let cal = out.calibration.unwrap();
    assert_eq!(cal.replications, 10);
    assert!(cal.report.curve.iter().any(|p| p.c == cal.chosen && p.coverage >= 0.95));
    assert_eq!(out.ledger.c, cal.chosen);
}

#[test]
fn every_family_runs() {
    let configs = [
        r#"
seed = 1
replications = 2
n = 200
kappa = 0.5
x = 3.0
[penalty]
mode = "fixed"
constant = 1e-4
[family]
kind = "hmm"
alphabet = 3
states = [1, 2, 3]
c_q = 1.0
alpha = 1.0
restarts = 2
[family.truth]
pi = [0.5, 0.5]
q = [0.8, 0.2, 0.2, 0.8]
nu = [0.7, 0.2, 0.1, 0.1, 0.2, 0.7]
"#,
        r#"
seed = 1
replications = 2
n = 300
kappa = 0.5
x = 3.0
[penalty]
mode = "fixed"
constant = 1e-4
[family]
kind = "neuro"
variant = "hawkes"
target = 0
order = [0, 1, 2]
lags = [1, 2]
epsilon = 0.05
window = 2
[family.network]
lag = 1
epsilon = 0.05
phi = { kind = "sigmoid" }
weights = [[0.5, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
"#,
        r#"
seed = 1
replications = 2
n = 100
kappa = 0.5
x = 3.0
[penalty]
mode = "fixed"
constant = 1e-4
[family]
kind = "exp3"
arms = 4
truth_cells = 2
truth_theta = [0.1, 2.0]
cells = [1, 2, 4]
horizon_scale = 6250000.0
r_min = 0.1
r_max = 2.0
epsilon = 0.1
"#,
    ];
    for text in configs {
        let out = run_experiment(&config(text)).unwrap();
        assert_eq!(out.ledger.rows.len(), 2, "{}", out.ledger.family);
        assert!(out.ledger.rows.iter().all(|r| r.consistent()));
    }
}

#[test]
fn unbounded_regime_only_for_hidden_markov_models() {
    let text = HISTOGRAM.replace("kappa = 0.5", "kappa = 0.5\nregime = \"unbounded\"");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn lemma_suite_passes_on_a_small_run() {
    for check in check_lemmas(3, 50, 500).unwrap() {
        assert!(check.passed(), "{check:?}");
        assert!(check.instances > 0);
    }
}
