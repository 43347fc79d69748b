use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--set", "mesh.nx=8", "--set", "mesh.ny=8", "--set", "noise.modes=8", "--set", "dt=1/16"];

fn spde(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPDE_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_accepts_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = spde(&["validate"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn validate_rejects_a_growing_drift() {
    let dir = tempfile::tempdir().unwrap();
    let out = spde(&["validate", "--set", "phi=0,0,0,1"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn validate_rejects_a_step_past_the_guard() {
    let dir = tempfile::tempdir().unwrap();
    let out = spde(&["validate", "--set", "phi=0,2", "--set", "dt=1"], dir.path());
    assert_eq!(code(&out), 2);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spde(&["validate", "--set", "mesh.nz=4"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("mesh.nz"));
}

#[test]
fn mesh_dump_writes_geometry_and_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = spde(
        &["mesh-dump", "--set", "mesh.nx=3", "--set", "mesh.ny=2", "--matrices", "--out", "m"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = dir.path().join("m");
    let nodes = std::fs::read_to_string(m.join("nodes.csv")).unwrap();
    let triangles = std::fs::read_to_string(m.join("triangles.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 1 + 12);
    assert_eq!(triangles.lines().count(), 1 + 12);
    for f in ["mass.csv", "stiffness.csv", "config.echo.ini"] {
        assert!(m.join(f).exists(), "{f} missing");
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--seed", "5", "--out", "a"];
    args.extend_from_slice(SMALL);
    let first = spde(&args, dir.path());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let echo = dir.path().join("a").join("config.echo.ini");
    let again = spde(
        &["--config", echo.to_str().unwrap(), "--out", "b"],
        dir.path(),
    );
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    let a = std::fs::read(dir.path().join("a/terminal.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/terminal.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_changes_the_path() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, out) in [("1", "s1"), ("2", "s2")] {
        let mut args = vec!["solve", "--seed", seed, "--out", out];
        args.extend_from_slice(SMALL);
        assert_eq!(code(&spde(&args, dir.path())), 0);
    }
    let a = std::fs::read(dir.path().join("s1/terminal.csv")).unwrap();
    let b = std::fs::read(dir.path().join("s2/terminal.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn environment_seed_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_spde"));
        cmd.args(["solve", "--out", out]).args(SMALL).args(extra).current_dir(dir.path());
        match env {
            Some(s) => cmd.env("SPDE_SEED", s),
            None => cmd.env_remove("SPDE_SEED"),
        };
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("terminal.csv")).unwrap()
    };
    let from_env = run(&[], Some("7"), "env");
    let from_flag = run(&["--seed", "7"], None, "flag");
    let flag_wins = run(&["--seed", "7"], Some("8"), "both");
    let default = run(&[], None, "default");
    assert_eq!(from_env, from_flag);
    assert_eq!(flag_wins, from_flag);
    assert_ne!(default, from_env);
}

#[test]
fn temporal_study_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = spde(
        &[
            "temporal-study", "--out", "t",
            "--set", "mesh.nx=4", "--set", "mesh.ny=4", "--set", "noise.modes=4",
            "--set", "study.samples=2", "--set", "study.schemes=implicit",
            "--set", "study.dt_list=1/4,1/8", "--set", "study.reference_dt=1/32",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let t = dir.path().join("t");
    let csv = std::fs::read_to_string(t.join("errors.csv")).unwrap();
    assert!(csv.starts_with("scheme,resolution,rms_error,n_samples,seed"));
    assert_eq!(csv.lines().count(), 3);
    for f in ["report.txt", "convergence.svg", "config.echo.ini"] {
        assert!(t.join(f).exists(), "{f} missing");
    }
}
