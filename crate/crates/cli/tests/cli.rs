use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn simulate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn split_args<'a>(soc: &'a str, df: &'a str) -> Vec<String> {
    vec![
        "--soc".into(),
        repo(soc).display().to_string(),
        "--dataflow".into(),
        repo(df).display().to_string(),
    ]
}

#[test]
fn single_run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let mut args = split_args("configs/soc_a.toml", "dataflows/nightvision_split.toml");
    args.extend(["--frames", "2", "--mode", "pipe", "--out"].map(String::from));
    args.push(out.display().to_string());
    let o = simulate(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("mode,metric,key,value\n"));
    assert!(csv.contains("pipe,frames,,2\n"));
    let manifest = fs::read_to_string(dir.path().join("run.manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"pipe\""), "{manifest}");
}

#[test]
fn compare_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.csv");
    let mut args = split_args("configs/soc_b.toml", "dataflows/multitile_classifier.toml");
    args.extend(["--frames", "3", "--compare", "--out"].map(String::from));
    args.push(out.display().to_string());
    let o = simulate(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dram = fs::read_to_string(dir.path().join("cmp_dram.csv")).unwrap();
    let tput = fs::read_to_string(dir.path().join("cmp_throughput.csv")).unwrap();
    for mode in ["serial", "pipe", "p2p"] {
        assert!(dram.lines().any(|l| l.starts_with(mode)), "{dram}");
        assert!(tput.lines().any(|l| l.starts_with(mode)), "{tput}");
    }
    assert!(String::from_utf8_lossy(&o.stderr).contains("DRAM accesses"));
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let mut args = split_args("configs/soc_a.toml", "dataflows/nightvision_split.toml");
    args.extend(["--frames", "1"].map(String::from));
    let o = simulate(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("p2p,total_cycles,,"));
}

#[test]
fn invalid_dataflow_fails() {
    let dir = tempfile::tempdir().unwrap();
    let df = dir.path().join("bad.toml");
    fs::write(&df, "[[nodes]]\nname = \"x\"\nkernel = \"histogram\"\n\n[[edges]]\nsrc = \"x\"\ndst = \"y\"\nmode = \"p2p\"\n")
        .unwrap();
    let o = simulate(&[
        "--soc",
        &repo("configs/soc_a.toml").display().to_string(),
        "--dataflow",
        &df.display().to_string(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("error:") && err.contains("y"), "{err}");
}

#[test]
fn zero_frames_and_bad_mode_fail() {
    let base = split_args("configs/soc_a.toml", "dataflows/nightvision_split.toml");
    let mut zero = base.clone();
    zero.extend(["--frames", "0"].map(String::from));
    let o = simulate(&zero.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame"));

    let mut mode = base;
    mode.extend(["--mode", "turbo"].map(String::from));
    let o = simulate(&mode.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("serial, pipe or p2p"));
}

#[test]
fn missing_soc_file_fails() {
    let o = simulate(&[
        "--soc",
        "/nonexistent/soc.toml",
        "--dataflow",
        &repo("dataflows/nightvision_split.toml")
            .display()
            .to_string(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
