use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochtop"))
}

fn three_bar_spec(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("three_bar.toml");
    let repo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems/three_bar.toml");
    std::fs::copy(repo, &path).unwrap();
    path
}

#[test]
fn run_converged_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = three_bar_spec(dir.path());
    let out_dir = dir.path().join("out");
    let output = bin()
        .args(["run"])
        .arg(&spec)
        .args(["--engine", "standard", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("initial value: 0.0278"), "stdout: {stdout}");
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("design_trial0.txt").exists());
    assert!(out_dir.join("topology_trial0.txt").exists());
    assert!(out_dir.join("metrics_trial0.csv").exists());
}

#[test]
fn non_converged_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = three_bar_spec(dir.path());
    let output = bin()
        .args(["run"])
        .arg(&spec)
        .args([
            "--engine",
            "stochastic",
            "--seed",
            "1",
            "--budget",
            "50",
            "--out",
        ])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_spec_exits_one_and_reports_all_findings() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(
        &spec,
        r#"
schema = 1
method = "density"

[domain]
width = 2.0
height = 1.0

[mesh]
nx = 4
ny = 2

[density]
volume_fraction = 7.0
filter_radius = 0.6

[[loads]]
at = [99.0, 99.0]
direction = [0.0, -1.0]
"#,
    )
    .unwrap();
    let output = bin().args(["run"]).arg(&spec).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("volume_fraction"), "stderr: {stderr}");
    assert!(stderr.contains("99.0"), "stderr: {stderr}");
    assert!(stderr.contains("support"), "stderr: {stderr}");
}

#[test]
fn compare_prints_both_engine_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = three_bar_spec(dir.path());
    let output = bin()
        .args(["compare"])
        .arg(&spec)
        .args(["--trials", "2", "--budget", "3000"])
        .output()
        .unwrap();
    // the short budget leaves the stochastic trials unconverged: exit 2
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("standard"), "stdout: {stdout}");
    assert!(stdout.contains("stochastic"), "stdout: {stdout}");
    assert!(stdout.contains("dC"), "stdout: {stdout}");
}

#[test]
fn oracle_passes() {
    let output = bin().args(["oracle", "--seed", "3"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "stdout: {stdout}");
    assert_eq!(stdout.matches("PASS").count(), 4, "stdout: {stdout}");
}

#[test]
fn run_with_baseline_reports_delta() {
    let dir = tempfile::tempdir().unwrap();
    let spec = three_bar_spec(dir.path());
    let baseline = dir.path().join("baseline.txt");
    std::fs::write(&baseline, "24.543297\n").unwrap();
    let output = bin()
        .args(["run"])
        .arg(&spec)
        .args(["--engine", "standard", "--baseline"])
        .arg(&baseline)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("delta C vs baseline"), "stdout: {stdout}");
}
