use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gslider_core::io::{read_volume, write_volume};
use gslider_core::DwiVolumeSet;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gslider-sr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Gradient table and a 16×16×10 phantom with 16 directions.
fn small_phantom(dir: &Path) -> PathBuf {
    let grads = dir.join("grads.txt");
    ok(&["gradients", "--n", "16", "--bvalue", "2000", "--out", p(&grads)]);
    let truth = dir.join("truth");
    ok(&["phantom", "--dims", "16,16,10", "--gradients", p(&grads), "--out", p(&truth)]);
    truth
}

#[test]
fn help_version_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let v = run(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    let text = String::from_utf8_lossy(&v.stdout);
    let version = text.split_whitespace().last().unwrap();
    assert_eq!(version.split('.').filter(|s| s.parse::<u32>().is_ok()).count(), 3);
    assert_eq!(run(&["phantom", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    assert_eq!(run(&["--threads", "0", "gradients", "--out", "x"]).status.code(), Some(1));
}

#[test]
fn phantom_and_simulate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let grads = dir.path().join("g64.txt");
    ok(&["gradients", "--out", p(&grads)]);
    assert_eq!(fs::read_to_string(&grads).unwrap().lines().count(), 64);
    let truth = dir.path().join("truth");
    ok(&["phantom", "--dims", "16,16,10", "--gradients", p(&grads), "--out", p(&truth)]);
    assert_eq!(read_volume(&truth).unwrap().n_q(), 64);
    assert!(dir.path().join("truth.manifest.json").exists());

    // same inputs, same bytes
    let again = dir.path().join("truth2");
    ok(&["phantom", "--dims", "16,16,10", "--gradients", p(&grads), "--out", p(&again)]);
    assert_eq!(
        fs::read(dir.path().join("truth.f32")).unwrap(),
        fs::read(dir.path().join("truth2.f32")).unwrap()
    );

    let acq = dir.path().join("acq");
    ok(&["simulate", "--truth", p(&truth), "--scheme-factor", "2", "--seed", "4", "--out-dir", p(&acq)]);
    let counts: Vec<usize> = (0..5)
        .map(|k| read_volume(&acq.join(format!("y_k{k}"))).unwrap().n_q())
        .collect();
    assert_eq!(counts, vec![32; 5]);
    assert_eq!(counts.iter().sum::<usize>(), 160);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(acq.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 4);

    let acq2 = dir.path().join("acq2");
    ok(&["simulate", "--truth", p(&truth), "--scheme-factor", "2", "--seed", "4", "--out-dir", p(&acq2)]);
    for k in 0..5 {
        let f = format!("y_k{k}.f32");
        assert_eq!(fs::read(acq.join(&f)).unwrap(), fs::read(acq2.join(&f)).unwrap());
    }
}

#[test]
fn noiseless_simulation_is_exact_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let truth = small_phantom(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--truth", p(&truth), "--scheme-factor", "1", "--snr", "inf", "--seed", "1", "--out-dir", p(&a)]);
    ok(&["simulate", "--truth", p(&truth), "--scheme-factor", "1", "--snr", "inf", "--seed", "2", "--out-dir", p(&b)]);
    assert_eq!(fs::read(a.join("y_k0.f32")).unwrap(), fs::read(b.join("y_k0.f32")).unwrap());
    let manifest = fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"inf\""));
}

#[test]
fn slab_divisibility_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let grads = dir.path().join("g.txt");
    ok(&["gradients", "--n", "16", "--out", p(&grads)]);
    let truth = dir.path().join("t");
    ok(&["phantom", "--dims", "16,16,19", "--gradients", p(&grads), "--out", p(&truth)]);
    let out = run(&["simulate", "--truth", p(&truth), "--out-dir", p(&dir.path().join("acq"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("19"));
}

#[test]
fn missing_inputs_and_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["phantom", "--gradients", "/nonexistent/g.txt", "--out", p(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));

    let truth = small_phantom(dir.path());
    let acq = dir.path().join("acq");
    ok(&["simulate", "--truth", p(&truth), "--out-dir", p(&acq)]);
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"lambda": 0.02, "lambda_tv": 0.005, "rho2": 0.01, "n_iter": 8, "epsilon": 0.0001,
            "bp_inner_iters": 50, "tv_inner_iters": 20, "tikhonov_mu": 0.2}"#,
    )
    .unwrap();
    let out = run(&["reconstruct", "--acq-dir", p(&acq), "--config", p(&cfg), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho1"));
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let truth = small_phantom(dir.path());
    let acq = dir.path().join("acq");
    ok(&["simulate", "--truth", p(&truth), "--scheme-factor", "2", "--out-dir", p(&acq)]);
    // the 2X normal matrix is singular; a vanishing ridge cannot be factorised
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"lambda": 0.02, "lambda_tv": 0.005, "rho1": 0.01, "rho2": 0.01, "n_iter": 8,
            "epsilon": 0.0001, "bp_inner_iters": 50, "tv_inner_iters": 20, "tikhonov_mu": 1e-300}"#,
    )
    .unwrap();
    let out = run(&[
        "reconstruct", "--acq-dir", p(&acq), "--config", p(&cfg), "--method", "tikhonov",
        "--out", p(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

fn scheme_value(csv: &str, scheme: &str, metric: &str, stat: &str) -> f64 {
    csv.lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| (scheme.is_empty() || f[0] == scheme) && f[1] == metric && f[2] == stat)
        .unwrap_or_else(|| panic!("no {metric}/{stat} row"))[3]
        .parse()
        .unwrap()
}

fn csv_value(csv: &str, metric: &str, stat: &str) -> f64 {
    scheme_value(csv, "", metric, stat)
}

#[test]
fn evaluate_trivial_cases() {
    let dir = tempfile::tempdir().unwrap();
    let truth = small_phantom(dir.path());
    let csv = dir.path().join("self.csv");
    let map = dir.path().join("map");
    ok(&[
        "evaluate", "--recon", p(&truth), "--truth", p(&truth), "--scheme", "truth",
        "--nmse-map", p(&map), "--out-csv", p(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("scheme,metric,statistic,value"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("truth,")));
    assert_eq!(csv_value(&text, "nmse_head", "median"), 0.0);
    assert_eq!(csv_value(&text, "nmse_tissue", "mean"), 0.0);
    assert_eq!(csv_value(&text, "dti_angular_error", "mean"), 0.0);
    assert_eq!(csv_value(&text, "odf_angular_error", "mean"), 0.0);
    assert_eq!(csv_value(&text, "false_peak_pct", "value"), 0.0);
    assert!(read_volume(&map).unwrap().values().iter().all(|&v| v == 0.0));

    let t = read_volume(&truth).unwrap();
    let zero = DwiVolumeSet::zeros(t.dims(), t.voxel_size(), t.n_q()).unwrap();
    let zstem = dir.path().join("zero");
    write_volume(&zstem, &zero).unwrap();
    let zcsv = dir.path().join("zero.csv");
    ok(&["evaluate", "--recon", p(&zstem), "--truth", p(&truth), "--out-csv", p(&zcsv)]);
    let text = fs::read_to_string(&zcsv).unwrap();
    for stat in ["median", "q1", "q3", "mean"] {
        assert_eq!(csv_value(&text, "nmse_head", stat), 1.0);
    }
}

#[test]
fn reconstruct_and_replay_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let truth = small_phantom(dir.path());
    let acq = dir.path().join("acq");
    ok(&["simulate", "--truth", p(&truth), "--scheme-factor", "2", "--seed", "3", "--out-dir", p(&acq)]);
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"lambda": 0.02, "lambda_tv": 0.005, "rho1": 0.01, "rho2": 0.01, "n_iter": 2,
            "epsilon": 0.0001, "bp_inner_iters": 20, "tv_inner_iters": 10, "tikhonov_mu": 0.2}"#,
    )
    .unwrap();
    let recon = dir.path().join("recon");
    ok(&["reconstruct", "--acq-dir", p(&acq), "--config", p(&cfg), "--out", p(&recon)]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("recon_report.json")).unwrap()).unwrap();
    assert_eq!(report["iterations_run"], 2);
    let first = fs::read(dir.path().join("recon.f32")).unwrap();
    let first_report = fs::read(dir.path().join("recon_report.json")).unwrap();

    // the manifest carries the configuration, so replay no longer needs the file
    fs::remove_file(&cfg).unwrap();
    fs::remove_file(dir.path().join("recon.f32")).unwrap();
    let manifest = dir.path().join("recon.manifest.json");
    ok(&["replay", "--manifest", p(&manifest)]);
    assert_eq!(fs::read(dir.path().join("recon.f32")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("recon_report.json")).unwrap(), first_report);

    let tik = dir.path().join("tik");
    ok(&["reconstruct", "--acq-dir", p(&acq), "--method", "tikhonov", "--out", p(&tik)]);
    assert_eq!(read_volume(&tik).unwrap().n_q(), 16);
}

#[test]
fn mc_contract_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let truth = small_phantom(dir.path());
    let out = run(&["mc", "--truth", p(&truth), "--n-mc", "1", "--out-dir", p(&dir.path().join("mc1"))]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"lambda": 0.02, "lambda_tv": 0.005, "rho1": 0.01, "rho2": 0.01, "n_iter": 1,
            "epsilon": 0.0001, "bp_inner_iters": 10, "tv_inner_iters": 5, "tikhonov_mu": 0.2}"#,
    )
    .unwrap();
    let mc = dir.path().join("mc");
    ok(&[
        "mc", "--truth", p(&truth), "--config", p(&cfg), "--factors", "2,5", "--include-hr",
        "--n-mc", "2", "--seed", "10", "--out-dir", p(&mc),
    ]);
    let csv = fs::read_to_string(mc.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("scheme,metric,statistic,value"));
    for scheme in ["2X", "5X", "HR"] {
        assert_eq!(scheme_value(&csv, scheme, "realizations", "count"), 2.0);
        assert!(mc.join(format!("realizations/{scheme}_001.json")).exists());
    }
    let first = fs::read(mc.join("summary.csv")).unwrap();
    ok(&["replay", "--manifest", p(&mc.join("manifest.json"))]);
    assert_eq!(fs::read(mc.join("summary.csv")).unwrap(), first);
}
