use std::fs;
use std::path::Path;

use surfdiff::config::{parse_config, ConfigFile, RunConfig, SweepConfig};
use surfdiff::driver::{run_convergence_sweep, run_sharp, run_simulation, SLOPES_COLUMNS, SWEEP_COLUMNS};
use surfdiff::model::tanh_profile;
use surfdiff::output::{read_diagnostics, read_vtk_scalar, DIAGNOSTICS_COLUMNS};
use surfdiff::Error;

fn run_config(dir: &Path, extra_model: &str) -> RunConfig {
    let text = format!(
        r#"
[grid]
nx = 48

[model]
kind = "NV"
p = 1.0
epsilon = 0.4
t_end = 2e-5
{extra_model}

[shape]
kind = "ellipse"
ax = 1.0
ay = 0.5

[output]
dir = "{}"
snapshot_every = 2
level_set_every = 5
"#,
        dir.display()
    );
    match parse_config(&text, Path::new("run.toml")).unwrap() {
        ConfigFile::Run(r) => r,
        other => panic!("{other:?}"),
    }
}

#[test]
fn run_writes_expected_files_and_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(tmp.path(), "");
    let report = run_simulation(&cfg).unwrap();
    assert_eq!(report.stats.steps, 5);

    let recs = read_diagnostics(&tmp.path().join("diagnostics.csv")).unwrap();
    assert_eq!(recs.len(), 6);
    for (k, pair) in recs.windows(2).enumerate() {
        assert!(pair[1].t > pair[0].t);
        assert!((pair[1].t - pair[0].t - cfg.model.tau).abs() < 1e-18, "row {k}");
    }
    assert!(recs[1..].iter().all(|r| r.iterations > 0));
    assert!(recs[0].a_x.is_some() && recs[5].a_x.is_some());

    // snapshot at t = 0 is the initial tanh field, bit for bit
    let u0 = read_vtk_scalar(&tmp.path().join("snapshot_000000.vtk"), "u").unwrap();
    let expected = cfg.shape.tanh_field(cfg.grid, cfg.model.epsilon).unwrap();
    assert_eq!(u0, expected.values());
    // spot check against the profile of the signed distance
    let c = cfg.grid.center(3, 17);
    assert_eq!(u0[cfg.grid.index(3, 17)], tanh_profile(cfg.shape.signed_distance(c), 0.4));

    for name in [
        "snapshot_000002.vtk",
        "snapshot_000004.vtk",
        "snapshot_000005.vtk",
        "levelset_000000.csv",
        "levelset_000005.csv",
        "config.resolved.toml",
    ] {
        assert!(tmp.path().join(name).exists(), "{name}");
    }
    let resolved = surfdiff::config::load_config(&tmp.path().join("config.resolved.toml")).unwrap();
    assert_eq!(resolved, ConfigFile::Run(cfg));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_simulation(&run_config(a.path(), "")).unwrap();
    run_simulation(&run_config(b.path(), "")).unwrap();
    for name in ["diagnostics.csv", "levelset_000005.csv", "snapshot_000005.vtk"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn golden_headers() {
    let tmp = tempfile::tempdir().unwrap();
    run_simulation(&run_config(tmp.path(), "")).unwrap();
    let text = fs::read_to_string(tmp.path().join("diagnostics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "# surfdiff diagnostics v1 model=NV p=1e0 epsilon=4e-1 alpha=1e-4 tau=4.000000000000001e-6 energy=monitor-only"
    );
    assert_eq!(lines.next().unwrap(), "step,t,mass,energy,dissipation,u_min,u_max,a_x,iterations,residual");
    assert_eq!(DIAGNOSTICS_COLUMNS, "step,t,mass,energy,dissipation,u_min,u_max,a_x,iterations,residual");
    let ls = fs::read_to_string(tmp.path().join("levelset_000000.csv")).unwrap();
    assert!(ls.starts_with("# surfdiff levelset v1 level=5e-1 step=0 t=0e0\nindex,x,y\n"));
    assert_eq!(
        SWEEP_COLUMNS,
        "model,p,epsilon,nx,steps,ax_diffuse,ax_sharp,delta,mass_drift,u_min,u_max,energy_initial,energy_final,max_energy_increase,status"
    );
    assert_eq!(SLOPES_COLUMNS, "model,p,epsilon_coarse,epsilon_fine,delta_coarse,delta_fine,order");
    let vtk = fs::read_to_string(tmp.path().join("snapshot_000000.vtk")).unwrap();
    let head: Vec<&str> = vtk.lines().take(10).collect();
    assert_eq!(
        head,
        [
            "# vtk DataFile Version 3.0",
            "surfdiff snapshot step=0 t=0e0",
            "ASCII",
            "DATASET STRUCTURED_POINTS",
            "DIMENSIONS 48 48 1",
            "ORIGIN -1.9583333333333333e0 -1.9583333333333333e0 0",
            "SPACING 8.333333333333333e-2 8.333333333333333e-2 1",
            "POINT_DATA 2304",
            "SCALARS u double 1",
            "LOOKUP_TABLE default",
        ]
    );
}

#[test]
fn solver_failure_flushes_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(tmp.path(), "solver_max_iter = 1");
    let err = run_simulation(&cfg).unwrap_err();
    assert!(matches!(err, Error::NonConvergence { .. }), "{err}");
    let recs = read_diagnostics(&tmp.path().join("diagnostics.csv")).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(tmp.path().join("snapshot_last.vtk").exists());
}

fn sweep_config(dir: &Path, extra: &str) -> SweepConfig {
    let text = format!(
        r#"
[grid]
nx = 40

[sweep]
models = ["DCH", "NV:1"]
epsilons = [0.4, 0.3]
t_bar = 2.4e-5
{extra}

[sharp]
points = 64

[output]
dir = "{}"
"#,
        dir.display()
    );
    match parse_config(&text, Path::new("sweep.toml")).unwrap() {
        ConfigFile::Sweep(s) => s,
        other => panic!("{other:?}"),
    }
}

#[test]
fn sweep_table_and_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sweep_config(tmp.path(), "");
    let table = run_convergence_sweep(&cfg, 2).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.failures(), 0);
    // one reference for every cell
    let ax = table.rows[0].ax_sharp;
    assert!(table.rows.iter().all(|r| r.ax_sharp == ax));
    assert_eq!(ax, table.sharp.last().unwrap().a_x);
    assert_eq!(table.slopes.len(), 2);
    for s in &table.slopes {
        let expect = (s.delta_coarse / s.delta_fine).ln() / (0.4f64 / 0.3).ln();
        assert!((s.order - expect).abs() < 1e-12);
    }
    let sweep = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 6);
    assert!(sweep.lines().skip(2).all(|l| l.ends_with(",ok")));
    assert!(tmp.path().join("cells/NV_p1_eps0.3/diagnostics.csv").exists());
    assert!(tmp.path().join("sharp_ax.csv").exists());

    // determinism across worker counts
    let tmp2 = tempfile::tempdir().unwrap();
    run_convergence_sweep(&sweep_config(tmp2.path(), ""), 1).unwrap();
    for name in ["sweep.csv", "slopes.csv", "sharp_ax.csv", "cells/DCH_p0_eps0.4/diagnostics.csv"] {
        assert_eq!(
            fs::read(tmp.path().join(name)).unwrap(),
            fs::read(tmp2.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn sweep_records_failed_cells_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sweep_config(tmp.path(), "solver_max_iter = 1");
    let table = run_convergence_sweep(&cfg, 2).unwrap();
    assert_eq!(table.failures(), 4);
    assert!(table.slopes.is_empty());
    let sweep = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| l.contains("\"failed: ")).count(), 4);
}

#[test]
fn sharp_run_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[shape]\nkind = \"ellipse\"\nax = 1.0\nay = 0.5\n\n[sharp]\npoints = 64\nt_end = 1e-3\nobserve_interval = 2.5e-4\n\n[output]\ndir = \"{}\"\n",
        tmp.path().display()
    );
    let ConfigFile::Sharp(cfg) = parse_config(&text, Path::new("s.toml")).unwrap() else {
        panic!()
    };
    let report = run_sharp(&cfg).unwrap();
    let ts: Vec<f64> = report.samples.iter().map(|s| s.t).collect();
    assert_eq!(ts.len(), 5);
    assert!((ts[4] - 1e-3).abs() < 1e-15);
    assert!(report.samples.windows(2).all(|w| w[1].a_x < w[0].a_x));
    let traj = fs::read_to_string(tmp.path().join("sharp_trajectory.csv")).unwrap();
    assert_eq!(traj.lines().nth(1).unwrap(), "t,index,x,y");
    assert_eq!(traj.lines().count(), 2 + 5 * 64);
}
