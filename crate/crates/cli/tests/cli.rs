use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn igabem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igabem"))
        .args(args)
        .env_remove("IGABEM_OUT_DIR")
        .env_remove("IGABEM_THREADS")
        .output()
        .unwrap()
}

fn run_slit(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--problem", "slit", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    igabem(&args)
}

#[test]
fn theta_zero_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_slit(dir.path(), &["--theta", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("theta out of range"), "{err}");
    assert_eq!(err["kind"], "config");
}

#[test]
fn unknown_problem_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = igabem(&["run", "--problem", "no-such-problem", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_all_artifacts_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run_slit(dir.path(), &["--max-iter", "4"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["convergence.csv", "metadata.json", "plot.gp", "mesh_0.json", "mesh_3.json", "solution_3.csv"] {
        assert!(a.path().join(name).is_file(), "{name} missing");
    }
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join("convergence.csv")).unwrap();
    assert_eq!(read(&a), read(&b));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["problem"]["name"], "slit");
    assert_eq!(meta["iterations"].as_array().unwrap().len(), 4);
}

#[test]
fn uniform_slit_converges_at_half_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_slit(dir.path(), &["--mode", "uniform", "--max-iter", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = igabem(&["fit-order", "--csv", dir.path().join("convergence.csv").to_str().unwrap()]);
    assert!(fit.status.success());
    let slope: f64 = String::from_utf8_lossy(&fit.stdout).trim().parse().unwrap();
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
}

fn write_table(path: &Path, rows: &[(f64, f64)]) {
    let mut text = String::from("iteration,N_H,cells,eta,error,slope_to_date,marked,max_level\n");
    for (k, (n, e)) in rows.iter().enumerate() {
        text.push_str(&format!("{k},{n},{n},{e},{e},,0,0\n"));
    }
    fs::write(path, text).unwrap();
}

fn fit(path: &Path) -> Output {
    igabem(&["fit-order", "--csv", path.to_str().unwrap()])
}

#[test]
fn fit_order_recovers_exact_and_noisy_powers() {
    let dir = tempfile::tempdir().unwrap();
    let ns = [10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0];
    let path = dir.path().join("exact.csv");
    write_table(&path, &ns.iter().map(|&n| (n, 3.0 * f64::powf(n, -3.5))).collect::<Vec<_>>());
    let out = fit(&path);
    let slope: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((slope + 3.5).abs() < 1e-10, "{slope}");

    let noise = [1.05, 0.95, 1.03, 0.97, 1.05, 0.95, 1.02, 0.98];
    let path = dir.path().join("noisy.csv");
    write_table(&path, &ns.iter().zip(noise).map(|(&n, z)| (n, z * f64::powf(n, -3.5))).collect::<Vec<_>>());
    let out = fit(&path);
    let slope: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((slope + 3.5).abs() < 0.2, "{slope}");
}

#[test]
fn fit_order_needs_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.csv");
    write_table(&path, &[(10.0, 1.0), (20.0, 0.5), (40.0, 0.25)]);
    let out = fit(&path);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 4 rows"));
}
