use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnarx-mpc"))
        .args(args)
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "config.json",
        "data/train.csv",
        "data/validation.csv",
        "data/test.csv",
        "model.json",
        "train_report.json",
        "tuning.json",
        "traces/offset_free.csv",
        "traces/deb.csv",
        "metrics/offset_free.json",
        "metrics/deb.json",
        "comparison.json",
        "report.md",
        "metrics.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let data = std::fs::read_to_string(dir.path().join("data/train.csv")).unwrap();
    assert!(data.starts_with("t,u,y\n"));
    assert!(stdout(&o).trim_end().ends_with("report.md"));
}

#[test]
fn stages_reuse_cached_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("test FIT"));
    let model = dir.path().join("model.json");
    let first = std::fs::metadata(&model).unwrap().modified().unwrap();

    let o = run(dir.path(), &["tune"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("mu_max"));
    assert_eq!(std::fs::metadata(&model).unwrap().modified().unwrap(), first);

    let bytes = std::fs::read(&model).unwrap();
    let o = run(dir.path(), &["train", "--force"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&model).unwrap(), bytes);
}

#[test]
fn seed_flag_changes_the_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(a.path(), &["generate"]).status.success());
    assert!(run(b.path(), &["generate", "--seed", "11"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("data/train.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nnarx-mpc"))
        .args(["generate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
}
