use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rhs-sim"))
}

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let cfg = desk_config();
    let mut args = vec![
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trials",
        "1",
        "--schemes",
        "zf_random,fixed@1",
        "--quiet",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn run_writes_csv_and_summarize_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = small_run(&out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scheme,p_max_dbm,trial,seed,throughput,iterations,converged,violations,wall_ms")
    );
    // 2 schemes x 6 power points x 1 trial.
    assert_eq!(lines.count(), 12);

    let o = run(&["summarize", "--in", out.to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 13);
    assert!(table.lines().nth(1).unwrap().starts_with("fixed@1"));
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert!(small_run(&a, &["--seed", "5"]).status.success());
    assert!(small_run(&b, &["--seed", "5"]).status.success());
    assert!(small_run(&c, &["--seed", "6"]).status.success());
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let cfg = desk_config();
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "1",
        "--schemes",
        "zf_random",
    ]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 7);
    // Summary goes to stderr.
    assert!(String::from_utf8(o.stderr).unwrap().contains("zf_random"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = small_run(&out, &["--schemes", "warp_drive"]);
    assert!(!o.status.success());

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[dims]\ns = 1\nk = 1\nm_x = 2\nm_y = 2\nn_tr = 2\nbogus = 3\n",
    )
    .unwrap();
    let o = run(&["run", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bogus") && err.contains("line 7"), "{err}");

    let o = run(&[
        "summarize",
        "--in",
        dir.path().join("missing.csv").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let o = run(&["run", "--config", "/nonexistent.toml"]);
    assert!(!o.status.success());
}

#[test]
fn trial_count_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(&dir.path().join("x.csv"), &["--trials", "0"]);
    assert!(!o.status.success());
}
