use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples/configs")
        .join(name)
}

fn run(args: &[&str], cfg: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbs-holder"))
        .args(args)
        .arg("--config")
        .arg(config(cfg))
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gibbs-holder-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn spectrum_writes_full_grid() {
    let out = run(&["spectrum"], "cantor_14_34.json");
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("q,beta,alpha,beta_star"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    assert!(!csv.contains('\r'));
    // β(1) = 0 and β(0) = log 2 / log 3 on this system
    let at = |q: f64| rows.iter().find(|r| (r[0] - q).abs() < 1e-12).unwrap()[1];
    assert!(at(1.0).abs() < 1e-10);
    assert!((at(0.0) - 2f64.ln() / 3f64.ln()).abs() < 1e-9);
    let summary = String::from_utf8(out.stderr).unwrap();
    for key in [
        "alpha_minus = 0.261860",
        "alpha_plus = 1.261860",
        "alpha_0 = 0.761860",
        "beta_star(alpha_0) = 0.630930",
    ] {
        assert!(summary.contains(key), "{summary}");
    }
}

#[test]
fn check_reports_degenerate_uniform_cantor() {
    let out = run(&["check"], "uniform_cantor.json");
    assert!(out.status.success());
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(
        summary.contains("OSC satisfied") && summary.contains("degenerate = true"),
        "{summary}"
    );
}

#[test]
fn cdf_on_lebesgue_is_the_identity() {
    let out = run(&["cdf", "--points", "0.25,0.5,0.75"], "lebesgue.json");
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,value,error_bound"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - v[0]).abs() <= 1e-8 && v[2] <= 1e-8);
    }
}

#[test]
fn out_flag_writes_file_and_prints_summary() {
    let dir = scratch("out");
    let path = dir.join("endpoints.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_gibbs-holder"))
        .args(["endpoints", "--config"])
        .arg(config("cantor_14_34.json"))
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("endpoints:"));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.lines().next().unwrap().contains(','));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn every_command_succeeds_on_every_config() {
    let commands = [
        "check",
        "pressure",
        "beta",
        "spectrum",
        "endpoints",
        "cdf",
        "holder",
        "coarse",
        "verify-prop",
        "detrend",
        "predict-packing",
    ];
    for cfg in [
        "cantor_14_34.json",
        "uniform_cantor.json",
        "lebesgue.json",
        "moebius.json",
    ] {
        for cmd in commands {
            let out = run(&[cmd], cfg);
            assert!(
                out.status.success(),
                "{cmd} on {cfg}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            let csv = String::from_utf8(out.stdout).unwrap();
            let header = csv.lines().next().unwrap();
            assert!(
                !header.is_empty() && header.split(',').all(|h| !h.is_empty()),
                "{cmd} on {cfg}"
            );
        }
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = scratch("bad");
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"schema_version": 1, "system": {"family": "affine", "domain": [0, 1], "maps": [{"ratio": "1/3", "offset": 0}]},
            "potential": {"kind": "bernoulli", "probs": [1]}, "bogus": 1}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gibbs-holder"))
        .args(["check", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("bogus"));
    let missing = Command::new(env!("CARGO_BIN_EXE_gibbs-holder"))
        .args(["check", "--config"])
        .arg(dir.join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let unknown = Command::new(env!("CARGO_BIN_EXE_gibbs-holder"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(unknown.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn computation_errors_exit_with_one() {
    // with no mass cutoff the descent along 0^n reaches the width floor
    let out = run(&["cdf", "--points", "0", "--depth", "60", "--tol", "0"], "moebius.json");
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("estimators"));
}
