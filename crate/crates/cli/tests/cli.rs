use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn surfdiff(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_surfdiff"));
    cmd.args(args).env("RUST_LOG", "warn");
    match root {
        Some(r) => cmd.env("SURFDIFF_OUTPUT_ROOT", r),
        None => cmd.env_remove("SURFDIFF_OUTPUT_ROOT"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RUN: &str = r#"
[grid]
nx = 32

[model]
kind = "DCH"
epsilon = 0.4
t_end = 1.2e-5

[shape]
kind = "circle"
radius = 1.0

[output]
dir = "run-out"
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn verify_default_table_passes() {
    let o = surfdiff(&["verify"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.ends_with("pass")).count(), 14);
    assert!(out.lines().next().unwrap().starts_with("integral"));
}

#[test]
fn verify_tolerance_failure_exits_3() {
    let o = surfdiff(&["verify", "--p-list", "1.9", "--z-max", "20"], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_rejects_bad_exponents() {
    let o = surfdiff(&["verify", "--p-list", "-1"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = surfdiff(&["verify", "--z-max", "5"], None);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn run_with_output_root_and_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", RUN);
    let o = surfdiff(&["--seedless", "run", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("run-out/diagnostics.csv").exists());
    assert!(tmp.path().join("run-out/snapshot_000003.vtk").exists());

    let other = tmp.path().join("elsewhere");
    let o = surfdiff(&["run", &cfg, "--output-dir", other.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(tmp.path().join("run-out/diagnostics.csv")).unwrap(),
        fs::read(other.join("diagnostics.csv")).unwrap()
    );
}

#[test]
fn validation_errors_exit_1_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &RUN.replace("0.4", "-0.4"));
    let o = surfdiff(&["run", &bad], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.epsilon"), "{}", stderr(&o));

    let typo = write_config(tmp.path(), "typo.toml", &RUN.replace("radius", "radios"));
    let o = surfdiff(&["run", &typo], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 10"), "{}", stderr(&o));

    let o = surfdiff(&["sweep", &write_config(tmp.path(), "r.toml", RUN)], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(1));

    let o = surfdiff(&["run", tmp.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));

    let o = surfdiff(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "fail.toml",
        &RUN.replace("t_end = 1.2e-5", "t_end = 1.2e-5\nsolver_max_iter = 1"),
    );
    let o = surfdiff(&["run", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(2));
    // the header and the initial row survive
    let diag = fs::read_to_string(tmp.path().join("run-out/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 3);
}

#[test]
fn sharp_and_sweep_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let sharp = write_config(
        tmp.path(),
        "sharp.toml",
        "[sharp]\npoints = 32\nt_end = 1e-3\n\n[output]\ndir = \"sharp-out\"\n",
    );
    let o = surfdiff(&["sharp", &sharp], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("sharp-out/sharp_trajectory.csv").exists());
    assert!(tmp.path().join("sharp-out/sharp_ax.csv").exists());

    let sweep = write_config(
        tmp.path(),
        "sweep.toml",
        "[grid]\nnx = 32\n\n[sweep]\nmodels = [\"DCH\", \"NV:2\"]\nepsilons = [0.5, 0.4]\nt_bar = 1e-5\n\n[sharp]\npoints = 32\n\n[output]\ndir = \"sweep-out\"\n",
    );
    let o = surfdiff(&["sweep", &sweep, "--workers", "2"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("sweep-out/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(stdout(&o).contains("order DCH"));
}
