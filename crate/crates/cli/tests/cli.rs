use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stlsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlsynth")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {out}"));
    line[key.len()..].trim().parse().unwrap()
}

#[test]
fn synthesize_then_check_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let (run, plan, gains) = (dir.path().join("run.csv"), dir.path().join("plan.json"), dir.path().join("gains.json"));
    let spec = configs().join("reach_avoid.stl");
    let system = configs().join("integrator2d.json");
    let o = stlsynth(&[
        "synthesize",
        "--spec",
        spec.to_str().unwrap(),
        "--system",
        system.to_str().unwrap(),
        "--out-run",
        run.to_str().unwrap(),
        "--out-plan",
        plan.to_str().unwrap(),
        "--out-gains",
        gains.to_str().unwrap(),
    ]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.contains("status: Satisfied"));
    assert!(out.contains("K = 2, L = 2"));
    let rho = field(&out, "robustness:");
    assert!(rho > 0.0);
    assert!(field(&out, "plan robustness:") <= rho + 1e-9);
    assert!(plan.exists());

    let o = stlsynth(&["check", "--spec", spec.to_str().unwrap(), "--run", run.to_str().unwrap()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!((field(&out, "robustness:") - rho).abs() < 1e-6);
    assert!(out.contains("satisfied: true"));

    let o = stlsynth(&[
        "simulate",
        "--system",
        system.to_str().unwrap(),
        "--run",
        run.to_str().unwrap(),
        "--gains",
        gains.to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
        "--runs",
        "20",
        "--seed",
        "4",
        "--disturbance",
        "0.1",
        "--x0-noise",
        "0.1",
    ]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(field(&out, "max tracking error:") < rho);
    assert!(field(&out, "min robustness:") > 0.0);
}

#[test]
fn contradiction_exits_unsat() {
    let o = stlsynth(&[
        "synthesize",
        "--spec",
        configs().join("contradiction.stl").to_str().unwrap(),
        "--system",
        configs().join("integrator2d.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("Unsatisfiable"));
}

#[test]
fn slow_input_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("slow.stl");
    std::fs::write(&spec, "G[0,5] (-0.1 < ux < 0.1) & F[0,3] x > 10\n").unwrap();
    let o = stlsynth(&[
        "synthesize",
        "--spec",
        spec.to_str().unwrap(),
        "--system",
        configs().join("integrator2d.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(stlsynth(&["synthesize"]).status.code(), Some(3));
    assert_eq!(stlsynth(&["frobnicate"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.stl");
    std::fs::write(&spec, "G (x > 0)\n").unwrap();
    let o = stlsynth(&["synthesize", "--spec", spec.to_str().unwrap(), "--system", configs().join("integrator2d.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}
