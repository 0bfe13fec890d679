//! End-to-end tests of the `mps-sso` binary: spawn the real executable,
//! check outputs, files, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64 as C64;

use mps_sso::io::save_mps;
use mps_sso::Mps;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mps-sso"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary spawns");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_ghz(path: &Path, n: usize) {
    let dim = 1usize << n;
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[0] = amp;
    v[dim - 1] = amp;
    let (mps, _) = Mps::from_statevector(&v, None, 0.0).unwrap();
    save_mps(path, &mps).unwrap();
}

/// Report JSON with the wall-clock field removed, reserialised canonically.
fn report_modulo_timing(path: &Path) -> String {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let obj = v.as_object_mut().expect("report is an object");
    assert!(obj.remove("timing").is_some(), "report carries a timing field");
    v.to_string()
}

/// CSV with the wall-clock column blanked.
fn csv_modulo_seconds(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 11 {
                cols[9] = "-";
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn ghz_target_with_mpd_reports_unit_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let ghz = dir.path().join("ghz.json");
    write_ghz(&ghz, 6);

    let out = run_ok(&[
        "synthesize",
        "--target",
        ghz.to_str().unwrap(),
        "--method",
        "mpd",
        "--layers",
        "1",
        "--json",
    ]);
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is a JSON object");
    let f_s = summary["f_s"].as_f64().unwrap();
    assert!((f_s - 1.0).abs() <= 1e-10, "GHZ preparation fidelity: {f_s}");
    assert_eq!(summary["n"], 6);
}

#[test]
fn identical_flags_give_byte_identical_reports_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    let base = [
        "synthesize",
        "--model",
        "ising",
        "--n",
        "6",
        "--chi-target",
        "4",
        "--method",
        "sso",
        "--layers",
        "2",
        "--max-iter",
        "40",
        "--seed",
        "11",
    ];

    let mut args1: Vec<&str> = base.to_vec();
    args1.extend(["--report", r1.to_str().unwrap()]);
    run_ok(&args1);
    let mut args2: Vec<&str> = base.to_vec();
    args2.extend(["--report", r2.to_str().unwrap()]);
    run_ok(&args2);

    assert_eq!(report_modulo_timing(&r1), report_modulo_timing(&r2));
}

#[test]
fn saved_config_replays_the_run_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");

    run_ok(&[
        "synthesize",
        "--model",
        "mbl",
        "--n",
        "6",
        "--chi-target",
        "4",
        "--model-seed",
        "3",
        "--method",
        "sso",
        "--layers",
        "2",
        "--max-iter",
        "40",
        "--seed",
        "5",
        "--save-config",
        cfg.to_str().unwrap(),
        "--report",
        r1.to_str().unwrap(),
    ]);
    // replay purely from the resolved config file
    run_ok(&[
        "synthesize",
        "--config",
        cfg.to_str().unwrap(),
        "--report",
        r2.to_str().unwrap(),
    ]);

    assert_eq!(report_modulo_timing(&r1), report_modulo_timing(&r2));
}

#[test]
fn validation_failures_exit_2_with_one_machine_parseable_line() {
    let cases: [&[&str]; 3] = [
        &["synthesize", "--model", "ising", "--n", "1", "--chi-target", "2"],
        &["synthesize", "--model", "ising", "--n", "6"], // missing chi-target
        &["inspect", "--mps", "/definitely/not/here.json"],
    ];
    for args in cases {
        let out = bin().args(args).output().expect("binary spawns");
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        let lines: Vec<&str> = stderr.lines().collect();
        assert_eq!(lines.len(), 1, "stderr for {args:?}: {stderr}");
        assert!(lines[0].starts_with("error: "), "line: {}", lines[0]);
    }
}

#[test]
fn benchmark_writes_reproducible_csv_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv1 = dir.path().join("a.csv");
    let csv2 = dir.path().join("b.csv");
    let base = [
        "benchmark",
        "--model",
        "ising",
        "--n",
        "6",
        "--chi-target",
        "4",
        "--methods",
        "mpd,sso",
        "--layers",
        "1,2",
        "--restarts",
        "1",
        "--max-iter",
        "40",
        "--seed",
        "9",
    ];

    let mut args1: Vec<&str> = base.to_vec();
    args1.extend(["--out", csv1.to_str().unwrap(), "--emit-plot-data"]);
    run_ok(&args1);
    let mut args2: Vec<&str> = base.to_vec();
    args2.extend(["--out", csv2.to_str().unwrap(), "--jobs", "2"]);
    run_ok(&args2);

    let raw = std::fs::read_to_string(&csv1).unwrap();
    assert!(raw.starts_with("family,n,chi_target,method,L,restart,F_S,eps_S,chi_max,seconds,seed"));
    let a = csv_modulo_seconds(&csv1);
    // 2 methods x 2 depths x 1 restart + header
    assert_eq!(a.lines().count(), 5);
    // numeric columns identical across reruns, even with a different job count
    assert_eq!(a, csv_modulo_seconds(&csv2));

    let eps = std::fs::read_to_string(dir.path().join("a_eps_vs_L.csv")).unwrap();
    let chi = std::fs::read_to_string(dir.path().join("a_chi_vs_L.csv")).unwrap();
    assert_eq!(eps.lines().next().unwrap(), "method,L,eps_S");
    assert_eq!(chi.lines().next().unwrap(), "method,L,chi_max");
    assert_eq!(eps.lines().count(), 5);
}

#[test]
fn inspect_reports_entropies_and_chi_k_fidelities() {
    let dir = tempfile::tempdir().unwrap();

    let product = dir.path().join("product.json");
    save_mps(&product, &Mps::basis_state(&[0, 1, 0, 1]).unwrap()).unwrap();
    let out = run_ok(&["inspect", "--mps", product.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for bond in v["bonds"].as_array().unwrap() {
        assert!(bond["entropy"].as_f64().unwrap().abs() <= 1e-12);
    }
    assert!((v["f_chi2"].as_f64().unwrap() - 1.0).abs() <= 1e-12);

    let ghz = dir.path().join("ghz.json");
    write_ghz(&ghz, 4);
    let out = run_ok(&["inspect", "--mps", ghz.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ln2 = std::f64::consts::LN_2;
    for bond in v["bonds"].as_array().unwrap() {
        assert!((bond["entropy"].as_f64().unwrap() - ln2).abs() <= 1e-9);
    }
    assert!((v["f_chi2"].as_f64().unwrap() - 1.0).abs() <= 1e-10);

    // --bond restricts the listing and rejects out-of-range indices
    let out = run_ok(&["inspect", "--mps", ghz.to_str().unwrap(), "--bond", "1", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bonds"].as_array().unwrap().len(), 1);
    let out = bin()
        .args(["inspect", "--mps", ghz.to_str().unwrap(), "--bond", "9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
