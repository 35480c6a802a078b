use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], config: Option<&str>, out: &Path) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sectorial"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(text) = config {
        let path = out.with_extension("json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    let output = cmd.output().expect("binary runs");
    output.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn verify_sector_interval_defaults_pass() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&["verify-sector"], None, &out), 0);
    let scan = read(&out.join("scan.csv"));
    let mut lines = scan.lines();
    assert_eq!(
        lines.next().unwrap(),
        "arg_lambda,abs_lambda,norm_G,defect_total,defect_inner,defect_S_eps,defect_transition,norm_R,contraction_q"
    );
    assert_eq!(lines.count(), 25);
    let fits = read(&out.join("fits.csv"));
    assert_eq!(fits.lines().count(), 11);
    for line in fits.lines().skip(1).filter(|l| l.contains("norm_G")) {
        let slope: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((slope + 1.0).abs() <= 0.15, "{line}");
    }
    let meta = json(&out.join("meta.json"));
    assert_eq!(meta["command"], "verify-sector");
    assert_eq!(meta["config"]["geometry"]["preset"], "interval");
    assert_eq!(meta["config"]["geometry"]["vertices"], 401);
    assert!(meta["defaulted"].as_array().unwrap().iter().any(|v| v == "geometry"));
    assert!(!meta["defaulted"].as_array().unwrap().iter().any(|v| v == "output_dir"));
    assert!(out.join("norm_g.svg").exists() && out.join("defect.svg").exists());
}

#[test]
fn coarse_mesh_reports_kernel_unresolved() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("coarse");
    let config = r#"{"geometry": {"preset": "interval", "vertices": 21}, "plots": false}"#;
    assert_eq!(run(&["verify-sector"], Some(config), &out), 3);
    let failure = json(&out.join("failure.json"));
    assert_eq!(failure["kind"], "kernel unresolved");
    assert!(failure["message"].as_str().unwrap().contains("kernel unresolved"));
    let dropped = failure["details"]["unresolved_moduli"].as_array().unwrap();
    assert_eq!(dropped.len(), 2);
}

#[test]
fn circle_scan_runs_without_reflection() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("circle");
    let config = r#"{"geometry": {"preset": "circle", "vertices": 200}, "plots": false}"#;
    let code = run(&["verify-sector"], Some(config), &out);
    assert!(code == 0 || code == 1, "exit {code}");
    let meta = json(&out.join("meta.json"));
    assert_eq!(meta["resolved"]["closed"], true);
    assert_eq!(meta["resolved"]["collar_vertices"], 0);
    assert!(out.join("scan.csv").exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"geometry": {"preset": "interval", "vertices": 101}, "moduli": [1, 4, 16, 64]}"#;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["verify-sector", "--seed", "11"], Some(config), &a);
    run(&["verify-sector", "--seed", "11"], Some(config), &b);
    for name in ["scan.csv", "fits.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    assert_eq!(json(&a.join("meta.json"))["config"]["seed"], 11);
}

#[test]
fn unknown_config_key_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("typo");
    assert_eq!(run(&["verify-sector"], Some(r#"{"etaa": 0.2}"#), &out), 2);
    let failure = json(&out.join("failure.json"));
    assert_eq!(failure["kind"], "configuration");
    assert!(failure["message"].as_str().unwrap().contains("etaa"));
}

#[test]
fn solve_ibp_interval_sine_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sine");
    let config = r#"{"initial": {"kind": "sine", "k": 1}, "times": [0.5]}"#;
    assert_eq!(run(&["solve-ibp"], Some(config), &out), 0);
    let meta = json(&out.join("meta.json"));
    let err = meta["result"]["max_error_vs_closed_form"].as_f64().unwrap();
    assert!(err <= 1e-4, "{err}");
    let csv = read(&out.join("solution_t0.5.csv"));
    assert_eq!(csv.lines().next().unwrap(), "vertex_index,x,u_real");
    assert_eq!(csv.lines().count(), 402);
    assert!(meta["result"]["contour"]["nodes"] == 48);
}

#[test]
fn solve_ibp_rejects_initial_file_of_wrong_length() {
    let dir = TempDir::new().unwrap();
    let u0 = dir.path().join("u0.txt");
    std::fs::write(&u0, "0 1 2\n").unwrap();
    let out = dir.path().join("bad");
    let config = format!(r#"{{"initial": {{"kind": "file", "path": {:?}}}}}"#, u0.to_str().unwrap());
    assert_eq!(run(&["solve-ibp"], Some(&config), &out), 2);
    let failure = json(&out.join("failure.json"));
    let msg = failure["message"].as_str().unwrap();
    assert!(msg.starts_with("initial.path") && msg.contains("401"), "{msg}");
}

#[test]
fn solve_ibp_disk_bump_keeps_dirichlet_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("disk");
    let config = r#"{"geometry": {"preset": "disk", "rings": 8}, "initial": {"kind": "bump"}, "times": [0.05, 0.2]}"#;
    assert_eq!(run(&["solve-ibp"], Some(config), &out), 0);
    for t in ["0.05", "0.2"] {
        let csv = read(&out.join(format!("solution_t{t}.csv")));
        let mut boundary = 0;
        for line in csv.lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            if (v[1].hypot(v[2]) - 1.0).abs() < 1e-9 {
                boundary += 1;
                assert_eq!(v[3], 0.0);
            }
        }
        assert_eq!(boundary, 48);
        assert!(out.join(format!("solution_t{t}.svg")).exists());
    }
}

#[test]
fn bench_bessel_default_passes_with_timing_table() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bessel");
    assert_eq!(run(&["bench-bessel"], None, &out), 0);
    let timing = json(&out.join("timing.json"));
    assert_eq!(timing.as_array().unwrap().len(), 5 * 3);
    let ids = read(&out.join("identities.csv"));
    assert!(ids.lines().skip(1).all(|l| l.ends_with(",pass") || l.ends_with(",skipped")));
}

#[test]
fn bench_bessel_zero_samples_flags_envelope_skipped() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bessel0");
    let config = r#"{"bessel": {"samples": 0, "orders": [0.5], "timing_repeats": 1}}"#;
    assert_eq!(run(&["bench-bessel"], Some(config), &out), 0);
    let ids = read(&out.join("identities.csv"));
    let envelope: Vec<&str> = ids.lines().filter(|l| l.starts_with("envelope")).collect();
    assert_eq!(envelope.len(), 4);
    assert!(envelope.iter().all(|l| l.ends_with(",skipped")));
    assert_eq!(json(&out.join("timing.json")).as_array().unwrap().len(), 3);
}

#[test]
fn kernel_integral_scan_recovers_exponent() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("integrals");
    assert_eq!(run(&["scan-kernel-integrals"], None, &out), 0);
    let fits = read(&out.join("fits.csv"));
    let row: Vec<&str> = fits.lines().nth(1).unwrap().split(',').collect();
    let slope: f64 = row[3].parse().unwrap();
    assert!((slope + 0.5).abs() <= 0.1, "{slope}");
}

#[test]
fn kernel_integral_scan_rejects_non_integrable_case() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bad_case");
    let config = r#"{"integrals": {"cases": [[0.5, 1.0]]}}"#;
    assert_eq!(run(&["scan-kernel-integrals"], Some(config), &out), 2);
}
