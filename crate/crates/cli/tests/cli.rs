use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tdpart(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdpart"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn tdpart")
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn find_middle() -> String {
    corpus().join("find_middle.tdp").display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn oracle_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let p = find_middle();
    let o = tdpart(
        &[
            "oracle",
            "--program",
            &p,
            "--max-depth",
            "3",
            "--report",
            "o.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("paths=6"));
    for mode in ["single", "threads", "tcp"] {
        let o = tdpart(
            &[
                "run",
                "--program",
                &p,
                "--mode",
                mode,
                "--workers",
                "4",
                "--max-depth",
                "3",
                "--verify",
                "o.csv",
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{mode}: {o:?}");
        assert!(stdout(&o).contains("verify: pass"));
    }
}

#[test]
fn verify_failure_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = find_middle();
    let o = tdpart(
        &[
            "oracle",
            "--program",
            &p,
            "--max-depth",
            "3",
            "--report",
            "o.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("o.csv")).unwrap();
    let edited: String = csv
        .lines()
        .filter(|l| !l.ends_with("C:100"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(dir.path().join("o.csv"), edited).unwrap();
    let o = tdpart(
        &[
            "run",
            "--program",
            &p,
            "--mode",
            "threads",
            "--workers",
            "2",
            "--max-depth",
            "3",
            "--verify",
            "o.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("FAIL") && out.contains("100"), "{out}");
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = tdpart(&["run", "--program", "missing.tdp"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    fs::write(dir.path().join("bad.tdp"), "").unwrap();
    let o = tdpart(&["run", "--program", "bad.tdp"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected program header"));
    let o = tdpart(
        &["run", "--program", &find_middle(), "--mode", "bogus"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_matches_shipped_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let o = tdpart(
        &["gen", "--seed", "1", "--count", "20", "--out", "gen"],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let mut names: Vec<_> = fs::read_dir(dir.path().join("gen"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 20);
    for n in &names {
        let fresh = fs::read(dir.path().join("gen").join(n)).unwrap();
        let shipped = fs::read(corpus().join("gen").join(n)).unwrap();
        assert_eq!(fresh, shipped, "{n:?}");
    }
    let files: Vec<String> = names
        .iter()
        .map(|n| format!("gen/{}", n.to_string_lossy()))
        .collect();
    let mut args = vec!["validate"];
    args.extend(files.iter().map(String::as_str));
    assert!(tdpart(&args, dir.path()).status.success());
}

#[test]
fn replayed_run_writes_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = corpus().join("gen/gen_1_013.tdp").display().to_string();
    let common = [
        "run",
        "--program",
        &p,
        "--mode",
        "threads",
        "--workers",
        "4",
        "--search",
        "rand",
        "--seed",
        "9",
        "--no-wall-time",
    ];
    let mut rec = common.to_vec();
    rec.extend(["--record", "s.json", "--report", "a.csv"]);
    assert!(tdpart(&rec, dir.path()).status.success());
    let mut rep = common.to_vec();
    rep.extend(["--replay", "s.json", "--report", "b.csv"]);
    let o = tdpart(&rep, dir.path());
    assert!(o.status.success(), "{o:?}");
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}
