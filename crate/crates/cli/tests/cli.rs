use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn ultramem(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultramem"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn manifest_files(dir: &Path) -> Vec<(String, String)> {
    let m = read(dir, "manifest.txt");
    let files = m.split("[files]\n").nth(1).unwrap();
    files
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (sum, name) = l.split_once("  ").unwrap();
            (sum.to_string(), name.to_string())
        })
        .collect()
}

#[test]
fn spectrum_gap_column_is_flat_for_longitudinal_coupling() {
    let dir = TempDir::new().unwrap();
    let out = ultramem(dir.path(), &["spectrum"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gap = csv_column(&read(dir.path(), "spectrum.csv"), "E1");
    assert_eq!(gap.len(), 61);
    assert!(gap.iter().all(|g| (g - 0.2).abs() < 1e-6), "{gap:?}");
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    let dir = TempDir::new().unwrap();
    let out = ultramem(dir.path(), &["sensitivity-map", "--set", "map.lambda_points=3", "--set", "map.theta_points=3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = manifest_files(dir.path());
    let names: Vec<&str> = files.iter().map(|(_, n)| n.as_str()).collect();
    assert_eq!(names, ["sensitivity_map.csv", "sensitivity_relaxation.gp", "sensitivity_dephasing.gp"]);
    for (sum, name) in &files {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(*sum, hex::encode(Sha256::digest(&bytes)), "{name}");
    }
    let manifest = read(dir.path(), "manifest.txt");
    assert!(manifest.contains("map.omega_q = 2e-1"), "defaults are echoed");
    assert!(manifest.contains("map.lambda_points = 3"));
}

#[test]
fn identical_runs_produce_identical_outputs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["dd", "--pulses", "1,2,8", "--seed", "7"];
    assert!(ultramem(a.path(), &args).status.success());
    assert!(ultramem(b.path(), &args).status.success());
    for name in ["dd_suppression.csv", "dd_calibration.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name));
    }
    let strip = |d: &Path| {
        read(d, "manifest.txt")
            .lines()
            .filter(|l| !l.starts_with("created_unix"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn dd_prints_amplitude_and_suppression() {
    let dir = TempDir::new().unwrap();
    let out = ultramem(dir.path(), &["dd", "--tau-fid", "10e-6", "--temp", "12e-3", "--pulses", "1000"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("A = ") && stdout.contains("alpha_1000 = "), "{stdout}");
    let record = read(dir.path(), "dd_calibration.txt");
    assert!(record.lines().next().unwrap().starts_with("A="));
    let alpha = csv_column(&read(dir.path(), "dd_suppression.csv"), "alpha_N");
    assert!((alpha[0] - 1e-3).abs() / 1e-3 < 0.05, "{alpha:?}");
}

#[test]
fn decoupled_limit_matches_the_table() {
    let dir = TempDir::new().unwrap();
    let out = ultramem(dir.path(), &["table1-check", "--alpha", "0"]);
    assert!(out.status.success());
    let csv = read(dir.path(), "table1_check.csv");
    assert_eq!(csv.lines().count(), 11);
    for col in ["abs_dSR", "abs_dSD"] {
        assert!(csv_column(&csv, col).iter().all(|r| *r < 1e-6), "{csv}");
    }
}

#[test]
fn table1_check_runs_its_acceptance_criterion() {
    let dir = TempDir::new().unwrap();
    let out = ultramem(dir.path(), &["table1-check", "--check"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("criterion 4 [PASS]"), "{stdout}");
    assert_eq!(out.status.code(), Some(0));
    assert!(read(dir.path(), "manifest.txt").contains("criterion_4 = pass"));
}

#[test]
fn config_errors_report_line_and_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[model]\ndelta = 0.2\n\nlamda = 1.0\n").unwrap();
    let out = ultramem(dir.path(), &["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("run.toml:4") && err.contains("model.lamda"), "{err}");
    assert!(!dir.path().join("manifest.txt").exists());

    std::fs::write(&cfg, "[sweep]\npoints = \"many\"\n").unwrap();
    let out = ultramem(dir.path(), &["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("run.toml:2"));

    let out = ultramem(dir.path(), &["spectrum", "--set", "space.n_fock=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ultramem(dir.path(), &["spectrum", "--set", "nosection=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = TempDir::new().unwrap();
    // transverse regime at weak coupling: no polarized pair to label
    let args = [
        "protocol",
        "--set",
        "model.epsilon=0.2",
        "--set",
        "model.delta=0",
        "--set",
        "model.lambda=0.05",
        "--set",
        "protocol.n_fock=30",
    ];
    let out = ultramem(dir.path(), &args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("labelling"));
}

#[test]
fn short_protocol_run_writes_trace() {
    let dir = TempDir::new().unwrap();
    let args = [
        "protocol",
        "--set",
        "protocol.pulse_shape=ideal",
        "--set",
        "protocol.samples=11",
        "--set",
        "advantage.enabled=false",
        "--threads",
        "1",
    ];
    let out = ultramem(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "protocol_trace.csv");
    assert!(csv.starts_with("gamma_c_t,F_s,F_P,F_free\n"));
    let manifest = read(dir.path(), "manifest.txt");
    assert!(manifest.contains("storage_fidelity = ") && manifest.contains("auxiliary.pass = true"));
}
