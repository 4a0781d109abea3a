use jmgt_cli::scenario::Scenario;
use jmgt_cli::{run, RunError};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn scenario(name: &str) -> Scenario {
    Scenario::from_toml(&fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const PRESETS: [&str; 7] = [
    "basis-report",
    "forward-solve",
    "pole-report",
    "linearized-roundtrip",
    "stability-probe",
    "qr-sweep",
    "smoothing-study",
];

#[test]
fn shipped_scenarios_validate_cleanly() {
    for name in PRESETS {
        let sc = scenario(name);
        assert!(sc.violations().is_empty(), "{name}: {:?}", sc.violations());
        assert_eq!(sc.preset.name(), name);
    }
}

#[test]
fn singular_modulation_is_named() {
    let mut sc = scenario("linearized-roundtrip");
    sc.source.amplitude = 1.0;
    let v = sc.violations();
    assert!(v.iter().any(|m| m.contains("source.amplitude") && m.contains("singular") && m.contains("A(A-1)")), "{v:?}");
    let err = run(&sc).unwrap_err();
    assert!(matches!(err, RunError::Validation(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn stability_requirement_and_period() {
    let mut sc = scenario("pole-report");
    sc.params.tau = 1.5;
    assert!(sc.violations().iter().any(|m| m.contains("stability requirement sigma0*beta >= tau")));
    let mut sc = scenario("pole-report");
    sc.params.period = 6.0;
    assert!(sc.violations().iter().any(|m| m.contains("2*pi")));
}

#[test]
fn references_outside_truncation() {
    let mut sc = scenario("linearized-roundtrip");
    sc.source.phi_mode = 16;
    sc.truth.eta = jmgt_cli::scenario::Field::Modes { coeffs: vec![0.1; 17] };
    let v = sc.violations();
    assert!(v.iter().any(|m| m.starts_with("source.phi_mode")));
    assert!(v.iter().any(|m| m.starts_with("truth.eta.coeffs")));
    let mut sc = scenario("smoothing-study");
    sc.domain = scenario("basis-report").domain;
    assert!(sc.violations().iter().any(|m| m.contains("rectangle")));
}

#[test]
fn roundtrip_preset_meets_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = scenario("linearized-roundtrip");
    sc.output = dir.path().to_path_buf();
    let written = run(&sc).unwrap();
    assert_eq!(written.len(), 2);
    let m = manifest(dir.path());
    assert!(m["summary"]["max_rel_error"].as_f64().unwrap() <= 1e-9);
    assert_eq!(m["preset"], "linearized-roundtrip");
    assert_eq!(m["scenario"]["seed"], 1);
}

#[test]
fn every_row_carries_the_hash_and_runs_repeat_exactly() {
    for name in PRESETS {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut sc = scenario(name);
        sc.output = a.path().to_path_buf();
        let first = run(&sc).unwrap();
        sc.output = b.path().to_path_buf();
        let second = run(&sc).unwrap();
        let hash = manifest(a.path())["scenario_hash"].as_str().unwrap().to_string();
        assert_eq!(hash, sc.hash());
        for (p, q) in first.iter().zip(&second) {
            let x = fs::read(p).unwrap();
            if p.extension().unwrap() == "json" {
                // identical apart from the echoed output directory
                let strip = |d: &Path| {
                    let mut m = manifest(d);
                    m["scenario"]["output"] = serde_json::Value::Null;
                    m
                };
                assert_eq!(strip(a.path()), strip(b.path()), "{name}");
            } else {
                assert!(x == fs::read(q).unwrap(), "{name}: {} differs", p.display());
                let text = String::from_utf8(x).unwrap();
                let mut lines = text.lines();
                assert!(lines.next().unwrap().starts_with("scenario_hash,"));
                assert!(lines.all(|l| l.starts_with(&format!("{hash},"))), "{name}");
            }
        }
    }
}

#[test]
fn forward_preset_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = scenario("forward-solve");
    sc.output = dir.path().to_path_buf();
    run(&sc).unwrap();
    for s in manifest(dir.path())["summary"]["solves"].as_array().unwrap() {
        assert!(s["time_domain_residual"].as_f64().unwrap() <= 1e-10, "{s}");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jmgt"))
}

#[test]
fn binary_exit_codes_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin().args(["validate"]).arg(scenario_path("basis-report")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(scenario_path("basis-report")).unwrap().replace("amplitude = 2.0", "amplitude = 1.0");
    fs::write(&bad, text).unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("source.amplitude"));
    assert_eq!(bin().arg("run").arg(&bad).output().unwrap().status.code(), Some(2));

    let garbled = dir.path().join("garbled.toml");
    fs::write(&garbled, "name = \"x\"\nunknown = 3\n").unwrap();
    assert_eq!(bin().arg("validate").arg(&garbled).output().unwrap().status.code(), Some(2));

    // strongly damped lowest mode: no oscillatory pole to recover from
    let damped = dir.path().join("damped.toml");
    let text = fs::read_to_string(scenario_path("linearized-roundtrip"))
        .unwrap()
        .replace("tau = 0.5", "tau = 0.01")
        .replace("beta = 1.0", "beta = 5.0");
    fs::write(&damped, text).unwrap();
    let out = bin().arg("run").arg(&damped).arg("--out").arg(dir.path().join("d")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical failure in poles"));

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let p = scenario_path("smoothing-study");
    assert_eq!(bin().arg("run").arg(&p).arg("--out").arg(&out_a).output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("run").arg(&p).arg("--out").arg(&out_b).arg("--seed").arg("5").output().unwrap().status.code(), Some(0));
    assert_eq!(manifest(&out_b)["seed"], 5);
    assert_ne!(manifest(&out_a)["scenario_hash"], manifest(&out_b)["scenario_hash"]);
    assert_ne!(fs::read(out_a.join("smoothing.csv")).unwrap(), fs::read(out_b.join("smoothing.csv")).unwrap());
}
