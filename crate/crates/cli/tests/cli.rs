//! Drives the `kaar` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use kaar::config::ExperimentConfig;

fn kaar(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kaar")).args(args).env("KAAR_OUT_DIR", out).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset(name: &str) -> String {
    format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn visible_entries(dir: &Path) -> Vec<String> {
    match std::fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kaar(&[], dir.path()).status.code(), Some(1));
    let o = kaar(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(kaar(&["bench", "--no-such-flag"], dir.path()).status.code(), Some(1));
    assert_eq!(kaar(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(kaar(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn config_errors_exit_with_two_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[experiment]\nhorizon = \"many\"\n").unwrap();
    let out = dir.path().join("out");
    let o = kaar(&["bench", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(visible_entries(&out).is_empty());

    let o = kaar(&["bench", "--override", "experiment.unknown_key=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = kaar(&["bench", "--config", "/nonexistent/config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_with_horizon_one_skips_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = kaar(
        &[
            "bench",
            "--config",
            &preset("smooth"),
            "--override",
            "experiment.horizon=1",
            "--override",
            "experiment.checkpoints=[1]",
            "--override",
            "experiment.n_seeds=1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("target exponent: 0.3333"), "{text}");
    assert!(text.contains("fewer than 4"), "{text}");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("seed,n,regret,slope\n0,1,"), "{summary}");
    assert!(summary.trim_end().ends_with(",nan"));
    let trace = std::fs::read_to_string(dir.path().join("trace_seed0.csv")).unwrap();
    assert!(trace.starts_with("t,y,yhat,loss,cum_loss,regret_"));
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn hard_preset_prints_its_target() {
    let dir = tempfile::tempdir().unwrap();
    let o = kaar(
        &[
            "bench",
            "--config",
            &preset("hard"),
            "--override",
            "experiment.horizon=16",
            "--override",
            "experiment.checkpoints=[4,8,16]",
            "--override",
            "experiment.n_seeds=1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("target exponent: 0.6000"), "{}", stdout(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "bench",
        "--config",
        &preset("smooth"),
        "--seed",
        "5",
        "--override",
        "experiment.horizon=64",
        "--override",
        "experiment.checkpoints=[8,16,32,64]",
        "--override",
        "experiment.n_seeds=2",
    ];
    assert_eq!(kaar(&args, a.path()).status.code(), Some(0));
    assert_eq!(kaar(&args, b.path()).status.code(), Some(0));
    let mut names = visible_entries(a.path());
    names.sort();
    assert_eq!(names, vec!["config.toml", "regret.dat", "summary.csv", "trace_seed5.csv", "trace_seed6.csv"]);
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name}"
        );
    }

    let cmp = [
        "compare",
        "--config",
        &preset("ewa-compare"),
        "--override",
        "experiment.horizon=128",
        "--override",
        "experiment.n_seeds=1",
    ];
    let (c, d) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(kaar(&cmp, c.path()).status.code(), Some(0));
    assert_eq!(kaar(&cmp, d.path()).status.code(), Some(0));
    let x = std::fs::read_to_string(c.path().join("compare_seed0.csv")).unwrap();
    assert_eq!(x, std::fs::read_to_string(d.path().join("compare_seed0.csv")).unwrap());
    assert!(x.starts_with("t,regret_kaar,regret_ewa\n"));
    assert_eq!(x.lines().count(), 129);
}

#[test]
fn written_config_reparses_to_the_same_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let o = kaar(&["effdim", "--config", &preset("effdim"), "--override", "effdim.n=[32,64]"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("target slope d/2s = 0.5000"));
    assert!(stdout(&o).contains("slope skipped"));
    let written = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    let text = std::fs::read_to_string(preset("effdim")).unwrap();
    let original = ExperimentConfig::from_toml_with_overrides(&text, &["effdim.n=[32,64]".into()]).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&written).unwrap(), original);
    assert!(std::fs::read_to_string(dir.path().join("effdim_equispaced.csv")).unwrap().starts_with("n,tau,d_eff,"));
}

#[test]
fn compare_rejects_multivariate_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = kaar(&["compare", "--override", "kernel.d=2", "--override", "schedule.beta=1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d = 1"), "{}", stderr(&o));
    assert!(visible_entries(dir.path()).is_empty());
}

#[test]
fn failed_runs_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = dir.path().join("out");
    let file = format!("adversary.stream_file=\"{}\"", missing.display());
    let o = kaar(
        &["bench", "--out", out.to_str().unwrap(), "--override", "adversary.stream=\"replay\"", "--override", &file],
        dir.path(),
    );
    assert_ne!(o.status.code(), Some(0));
    assert!(visible_entries(&out).is_empty(), "{:?}", visible_entries(&out));
}

#[test]
fn verify_passes_and_detects_a_corrupted_gram() {
    let dir = tempfile::tempdir().unwrap();
    let o = kaar(&["verify"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = kaar(&["verify", "--inject-corrupt-gram"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let text = stdout(&o);
    let failing: Vec<&str> =
        text.lines().filter(|l| l.contains(" FAIL ")).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(failing, vec!["kernel_psd"]);
}

#[test]
fn net_info_reports_the_expert_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = kaar(&["net-info", "--override", "ewa.epsilon=0.5", "--override", "schedule.beta=1.0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("experts = 95"), "{}", stdout(&o));
}

#[test]
fn presets_parse() {
    for name in ["smooth", "hard", "holder", "ewa-compare", "effdim"] {
        ExperimentConfig::load(Path::new(&preset(name)), &[]).unwrap();
    }
}
