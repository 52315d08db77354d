use std::fs;
use std::process::Command;

use tempfile::tempdir;

fn l1stab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l1stab"))
}

#[test]
fn solve_writes_the_minimizer() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let y = dir.path().join("y.csv");
    let out = dir.path().join("x.csv");
    fs::write(&a, "1,1,0\n0,1,1\n").unwrap();
    fs::write(&y, "1\n1\n").unwrap();
    let st = l1stab()
        .args(["solve", "--matrix"])
        .arg(&a)
        .arg("--y")
        .arg(&y)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# l1stab"), "{text}");
}

#[test]
fn phase_diagram_is_deterministic_on_disk() {
    let dir = tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let st = l1stab()
            .args([
                "phase-diagram",
                "--n",
                "30",
                "--delta",
                "0.5",
                "--rho",
                "0.1,0.3",
            ])
            .args(["--trials", "4", "--seed", "9", "--out"])
            .arg(&path)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn config_errors_exit_with_two() {
    let st = l1stab().args(["angles", "--table", "Q"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = l1stab()
        .args([
            "solve",
            "--matrix",
            "/nonexistent/a.csv",
            "--y",
            "/nonexistent/y.csv",
        ])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"kind":"angles","bogus":1}"#).unwrap();
    let st = l1stab()
        .args(["angles", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn angles_json_to_stdout() {
    let out = l1stab()
        .args([
            "angles",
            "--table",
            "B",
            "--m-prime-max",
            "3",
            "--params",
            "0.5",
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}
