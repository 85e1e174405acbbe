//! End-to-end checks of the command-line surface.

use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dsgd")
}

#[test]
fn rho2_prints_an_estimate_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.txt");
    std::fs::write(&path, "+1 3:0.5\n-1 1:1.0\n").unwrap();
    let out = Command::new(bin()).arg("rho2").arg("--data").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("rho2 "), "unexpected output: {stdout}");
}

#[test]
fn unknown_flag_fails_with_usage() {
    let out = Command::new(bin()).args(["rho2", "--no-such-flag"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "no usage text: {stderr}");
}

#[test]
fn missing_data_file_is_a_clean_error() {
    let out = Command::new(bin())
        .args(["rho2", "--data", "/definitely/not/here.txt"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn train_accepts_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        r#"
            synth = "gaussian:d=10,n=100,seed=1"
            scheme = "minibatch"
            mu = 0.1
            loss = "hinge"
            iterations = 64
            batch = 4
            seed = 9
        "#,
    )
    .unwrap();
    let out_dir = dir.path().join("runs");
    let out = Command::new(bin())
        .arg("train")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(csv.starts_with("t,node,objective,network_error\n"));
    assert!(csv.lines().count() > 3);
}

#[test]
fn gram_stats_writes_per_trial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args([
            "gram-stats",
            "--synth",
            "orthoblock:d=20,support=5,n=200",
            "--k",
            "8",
            "--trials",
            "50",
            "--seed",
            "2",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("gram_k8_seed2.csv")).unwrap();
    assert!(csv.starts_with("trial,k,sigma1\n"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn fmmc_emits_trace_and_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args([
            "fmmc",
            "--nodes",
            "16",
            "--topology",
            "geometric",
            "--basis-fraction",
            "0.3",
            "--iters",
            "40",
            "--seed",
            "4",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("fmmc_slem_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,current_slem,best_slem\n"));
    assert!(dir.path().join("fmmc_best_matrix.csv").exists());
    assert!(dir.path().join("fmmc_graph.txt").exists());
}
