use bss_toolkit::config::ExperimentConfig;
use bss_toolkit::io::{emit_report, ReportFormat};
use bss_toolkit::report::Check;
use bss_toolkit::{run_experiment, ToolkitError};

const FEASIBLE: &str = r#"
kind = "feasible"
seed = 11
paths = 200
regime = "tilde_theoretical"
ratio_time = 0.5
[grid]
n = 100
[kernel]
diagonal = [{ delta = 0.1, lambda = 1.0 }, { delta = -0.1, lambda = 2.0 }]
[volatility]
constant = [[1.0, 0.0], [0.5, 1.0]]
"#;

#[test]
fn feasible_run_reports_every_check() {
    let cfg = ExperimentConfig::from_toml(FEASIBLE).unwrap();
    let report = run_experiment(&cfg).unwrap();
    for check in [Check::Mean, Check::Exact, Check::Covariance, Check::Bitwise] {
        assert!(report.records.iter().any(|r| r.check == check), "{check:?} missing");
    }
    for r in report.records.iter().filter(|r| matches!(r.check, Check::Exact | Check::Bitwise)) {
        assert!(r.pass, "{}", r.statistic);
    }
    assert_eq!(report.pass, report.failures().next().is_none());
    assert!(report.timing.is_some());
}

#[test]
fn reports_are_deterministic() {
    let cfg = ExperimentConfig::from_toml(FEASIBLE).unwrap();
    let a = run_experiment(&cfg).unwrap().to_json();
    let b = run_experiment(&cfg).unwrap().to_json();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(a, run_experiment(&other).unwrap().to_json());
}

#[test]
fn gaussian_core_small_run() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        kind = "gaussian_core_clt"
        seed = 3
        paths = 300
        regime = "case_i"
        [grid]
        n = 100
        [kernel]
        diagonal = [{ delta = -0.2, lambda = 1.0 }]
        "#,
    )
    .unwrap();
    let report = run_experiment(&cfg).unwrap();
    let cov: Vec<_> = report.records.iter().filter(|r| r.check == Check::Covariance).collect();
    assert_eq!(cov.len(), 1);
    assert!(cov[0].target.unwrap() > 0.0);
    assert!(report.records.iter().any(|r| r.check == Check::Normality));
}

#[test]
fn zero_volatility_is_rejected() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        kind = "lln"
        paths = 10
        regime = "bar_sum"
        [grid]
        n = 50
        [kernel]
        diagonal = [{ delta = 0.1, lambda = 1.0 }]
        [volatility]
        constant = [[0.0]]
        "#,
    )
    .unwrap();
    assert!(matches!(run_experiment(&cfg), Err(ToolkitError::Config(_))));
}

#[test]
fn regime_mismatch_is_rejected() {
    let mut cfg = ExperimentConfig::from_toml(FEASIBLE).unwrap();
    cfg.regime = Some(bss_toolkit::config::RegimeChoice::CaseI);
    assert!(matches!(run_experiment(&cfg), Err(ToolkitError::Config(_))));
}

#[test]
fn audit_flags_out_of_range_delta() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        kind = "audit"
        [audit]
        deltas = [0.6, -0.25]
        lambdas = [1.0]
        n = 4096.0
        max_lag = 200
        "#,
    )
    .unwrap();
    let report = run_experiment(&cfg).unwrap();
    let domain: Vec<_> = report.records.iter().filter(|r| r.check == Check::Domain).collect();
    assert_eq!(domain.len(), 2);
    assert!(domain[0].note.as_deref().unwrap().contains("rejected"));
    assert!(report.records.iter().all(|r| !r.statistic.contains("δ=0.6") || r.check == Check::Domain));
    assert!(report.records.iter().any(|r| r.statistic == "square_summable δ=-0.25 λ=1" && r.pass));
}

#[test]
fn emitted_files() {
    let cfg = ExperimentConfig::from_toml(FEASIBLE).unwrap();
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path(), &[ReportFormat::Json, ReportFormat::Table, ReportFormat::PlotData]).unwrap();
    assert!(files.len() >= 3);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), report.records.len());
    assert!(json.get("timing").is_none());
    let table = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(table.lines().count(), report.records.len() + 1);
    assert!(dir.path().join("timing.json").exists());
}
