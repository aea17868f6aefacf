use std::fs;
use std::path::Path;
use std::process::Command;

fn qbypass() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qbypass"))
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "experiment = \"table2\"\nseeds = [0,\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = qbypass().args(["run", "table2", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "{err}");
    assert!(!out_dir.exists());
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = qbypass().args(["run", "table9", "--out"]).arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
    let out = qbypass().args(["run", "table2", "--dataset", "iris", "--out"]).arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    let text = r#"
experiment = "table6"
datasets = ["wine"]
seeds = [3]
models = ["classical"]

[train]
max_epochs = 2

[fed]
clients = 3
rounds = 2
local_epochs = 1
"#;
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_identical_tables_twice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut csvs = Vec::new();
    for i in 0..2 {
        let out_dir = dir.path().join(format!("out{i}"));
        let out = qbypass().args(["run", "table6", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for ext in ["csv", "md", "json"] {
            assert!(out_dir.join(format!("table6.{ext}")).exists());
        }
        csvs.push(fs::read(out_dir.join("table6.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn partition_inspect_prints_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = qbypass().arg("partition-inspect").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("client,class0,class1,class2,total"), "{text}");
    let totals: usize = text
        .lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(totals, 178);
}

#[test]
fn verify_passes() {
    let out = qbypass().arg("verify").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
