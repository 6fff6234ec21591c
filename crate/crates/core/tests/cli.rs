use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(sub: &str, config: &Path, out: &Path, workers: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pdo-verify"));
    if let Some(w) = workers {
        cmd.args(["--workers", &w.to_string()]);
    }
    cmd.arg(sub).arg("--config").arg(config).arg("--out").arg(out);
    cmd.output().expect("binary runs")
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn verify_second_order_passes_with_per_datum_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("verify", &configs().join("second_order.json"), dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    let csv = dir.path().join("second_order_w1_a0.csv");
    assert_eq!(header(&csv), "datum_id,lhs,rhs,ratio,flags");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("second_order_w1_a0.json")).unwrap()).unwrap();
    for key in ["max_ratio", "mu_aT", "slope_diagnostics", "verdict"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn kernel_bounds_writes_the_sweep_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("kernel-bounds", &configs().join("heat_sweep.json"), dir.path(), None);
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    assert_eq!(
        header(&dir.path().join("kernel_bounds.csv")),
        "epsilon,j,t,p,n,m,alpha_code,lhs,shape,log2_N_hat,flags"
    );
}

#[test]
fn anti_dissipative_symbol_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("check-symbol", &configs().join("bad_symbol.json"), dir.path(), None);
    assert_eq!(out.status.code(), Some(1));
    let js: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("check_symbol.json")).unwrap()).unwrap();
    assert_eq!(js["verdict"], "fail");
    assert_eq!(js["elliptic"], false);
}

#[test]
fn malformed_config_reports_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"symbol": {"kind": "heat"}, "grid": {"dim": 1, "n": "many", "half_width": 8.0}}"#,
    )
    .unwrap();
    let out = run("check-symbol", &cfg, dir.path(), None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("/grid/n"), "{err}");
}

#[test]
fn every_subcommand_runs_on_its_shipped_config() {
    let cases = [
        ("check-symbol", "heat_symbol.json", 0),
        ("ap-constant", "ap_power.json", 0),
        ("lp-norm", "lp_norm.json", 0),
        ("laplace", "laplace.json", 0),
        ("control-seq", "control_seq.json", 0),
        ("solve", "solve.json", 0),
        ("weak-residual", "weak_residual.json", 0),
        ("verify", "inhomogeneous.json", 0),
    ];
    for (sub, file, code) in cases {
        let dir = tempfile::tempdir().unwrap();
        let out = run(sub, &configs().join(file), dir.path(), None);
        assert_eq!(out.status.code(), Some(code), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1, "{sub}");
    }
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let mut csvs = Vec::new();
    for w in [1, 4, 8] {
        let dir = tempfile::tempdir().unwrap();
        let out = run("verify", &configs().join("inhomogeneous.json"), dir.path(), Some(w));
        assert_eq!(out.status.code(), Some(0));
        csvs.push((
            std::fs::read(dir.path().join("heat_inhomogeneous.csv")).unwrap(),
            std::fs::read(dir.path().join("heat_inhomogeneous.json")).unwrap(),
        ));
    }
    assert!(csvs.windows(2).all(|w| w[0] == w[1]));
}
