use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_purcellkit"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("PURCELLKIT_JOBS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn rates_report_has_schema_and_suppression() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["rates", "--preset", "paper-sec3b"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&dir.path().join("rates.json"));
    for key in [
        "gamma_exact",
        "gamma_quadratic",
        "gamma_iter2",
        "gamma_qs_full",
        "gamma_qs_simple",
        "gamma_dm",
        "kappa_q",
        "kappa_r",
        "F",
    ] {
        assert!(doc[key].is_number(), "missing {key}");
    }
    let f = doc["F"].as_f64().unwrap();
    assert!((f / 0.021 - 1.0).abs() < 0.05, "F = {f}");
    // Stdout carries the same document.
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed, doc);
}

#[test]
fn transient_filter_drive_steady_photons() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["transient", "--preset", "paper-fig3a", "--port", "filter"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let last_nf = |state: &str| {
        let (h, rows) = csv_rows(&dir.path().join(format!("transient_{state}.csv")));
        assert_eq!(
            h,
            [
                "t_ns", "re_alpha", "im_alpha", "re_beta", "im_beta", "n_r", "n_f", "re_gamma",
                "im_gamma"
            ]
        );
        rows.last().unwrap()[column(&h, "n_f")]
            .parse::<f64>()
            .unwrap()
    };
    let (g, e) = (last_nf("g"), last_nf("e"));
    assert!((e - 1.0).abs() < 0.1, "n_f^e = {e}");
    assert!((g - 0.01).abs() < 0.005, "n_f^g = {g}");
}

#[test]
fn missing_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["rates", "--config", "definitely-missing.toml"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("definitely-missing.toml"));

    let out = run(dir.path(), &["rates", "--set", "g_mhz=-5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_window_inside_transients_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "driven-sweep",
            "--preset",
            "paper-fig4",
            "--set",
            "driven.n_bar_list=[0.0]",
            "--set",
            "driven.fit_window_ns=[5.0, 100.0]",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn frequency_sweep_shows_hundredfold_suppression() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["sweep", "--preset", "paper-sec3b"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, rows) = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(h[0], "omega_q_ghz");
    let x: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(x, [5.5, 5.9, 6.5]);
    let f: f64 = rows[0][column(&h, "F")].parse().unwrap();
    assert!((90.0..115.0).contains(&(1.0 / f)), "1/F = {}", 1.0 / f);
}

#[test]
fn sweep_rows_carry_errors_and_empty_sweeps_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["sweep", "--key", "omega_q_ghz", "--values", "5.9,-1"],
    );
    assert!(out.status.success());
    let (h, rows) = csv_rows(&dir.path().join("sweep.csv"));
    let err = column(&h, "error");
    assert!(rows[0][err].is_empty());
    assert!(rows[1][err].contains("omega_q"));

    let out = run(
        dir.path(),
        &["sweep", "--key", "omega_q_ghz", "--values", "-1,-2"],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["sweep", "--set", "sweep.values=[]"]);
    assert!(out.status.success());
    let (_, rows) = csv_rows(&dir.path().join("sweep.csv"));
    assert!(rows.is_empty());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "sweep",
        "--key",
        "g_mhz",
        "--values",
        "50,60,70,80,90,100,110",
    ];
    assert!(run(a.path(), &[&args[..], &["--jobs", "1"]].concat())
        .status
        .success());
    assert!(run(b.path(), &[&args[..], &["--jobs", "4"]].concat())
        .status
        .success());
    let read = |d: &Path| std::fs::read(d.join("sweep.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    assert!(run(a.path(), &["spectrum", "--preset", "paper-fig3b"])
        .status
        .success());
    assert!(run(b.path(), &["spectrum", "--preset", "paper-fig3b"])
        .status
        .success());
    let read = |d: &Path| std::fs::read(d.join("spectrum.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        run(dir.path(), &["dispersive", "--preset", "paper-appendix"])
            .status
            .success()
    );
    let m = json(&dir.path().join("dispersive.manifest.json"));
    assert_eq!(m["command"], "dispersive");
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let bytes = std::fs::read(dir.path().join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(
            o["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    assert!(m["duration_s"].is_number());
}

#[test]
fn units_apply_to_echo_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        dir.path(),
        &["spectrum", "--preset", "paper-fig3a", "--units", "rad_ns"]
    )
    .status
    .success());
    let m = json(&dir.path().join("spectrum.manifest.json"));
    let w = m["params"]["omega_q_rad_ns"].as_f64().unwrap();
    assert!((w - 5.9 * std::f64::consts::TAU).abs() < 1e-12);
    assert!(m["options"]["start_rad_ns"].is_number());
    let (h, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(h[0], "f_rad_ns");
    let first: f64 = rows[0][0].parse().unwrap();
    assert!((first - 6.78 * std::f64::consts::TAU).abs() < 1e-9);

    assert!(run(dir.path(), &["spectrum", "--preset", "paper-fig3a"])
        .status
        .success());
    let (h, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(h[0], "f_ghz");
    assert!((rows[0][0].parse::<f64>().unwrap() - 6.78).abs() < 1e-12);
}

#[test]
fn budget_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        run(dir.path(), &["error-budget", "--preset", "paper-appendix"])
            .status
            .success()
    );
    let doc = json(&dir.path().join("error_budget.json"));
    for key in [
        "t_m_ns",
        "n_bar",
        "delta_alpha",
        "delta_alpha_eff",
        "p_sep",
        "p_purcell",
        "p_intrinsic",
        "p_total",
        "t_m_bound_ns",
        "detuning_bound",
    ] {
        assert!(doc[key].is_number(), "missing {key}");
    }
    assert!((doc["p_purcell"].as_f64().unwrap() / 1e-3 - 1.0).abs() < 0.05);
}

#[test]
fn undriven_point_reproduces_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "driven-sweep",
            "--preset",
            "paper-fig4",
            "--set",
            "driven.n_bar_list=[0.0]",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, rows) = csv_rows(&dir.path().join("driven_sweep.csv"));
    assert_eq!(
        &h[..8],
        [
            "n_bar",
            "n_bar_over_4ncrit",
            "gamma_per_ns",
            "ratio",
            "ratio_model_quartic",
            "fit_residual",
            "n_max_r",
            "n_max_f"
        ]
    );
    let ratio: f64 = rows[0][column(&h, "ratio")].parse().unwrap();
    assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
}
