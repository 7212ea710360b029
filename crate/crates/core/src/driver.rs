//! Run orchestration: single simulations, sharp-interface runs and the
//! epsilon-convergence sweep.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{chemical_potential, delta_metric, energy, extract_level_set, measure_ax, DiagnosticsRecord};
use crate::config::{ConfigFile, RunConfig, SharpConfig, SweepConfig, SweepModel};
use crate::error::{Error, Result};
use crate::grid::{integrate, ScalarField};
use crate::output::{
    create, fmt_f64, write_level_set, write_sharp_ax, write_trajectory_rows, write_vtk, DiagnosticsWriter,
    SharpSample, TRAJECTORY_COLUMNS,
};
use crate::shape::Shape;
use crate::sharp::{si_run, SiOptions};
use crate::solver::{self, ModelConfig};

/// Environment variable naming the directory that relative output paths are
/// resolved against (default: the working directory).
pub const OUTPUT_ROOT_ENV: &str = "SURFDIFF_OUTPUT_ROOT";

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SLOPES_FILE: &str = "slopes.csv";
pub const SHARP_AX_FILE: &str = "sharp_ax.csv";
pub const TRAJECTORY_FILE: &str = "sharp_trajectory.csv";
pub const SWEEP_COLUMNS: &str = "model,p,epsilon,nx,steps,ax_diffuse,ax_sharp,delta,mass_drift,u_min,u_max,energy_initial,energy_final,max_energy_increase,status";
pub const SLOPES_COLUMNS: &str = "model,p,epsilon_coarse,epsilon_fine,delta_coarse,delta_fine,order";

/// Resolves a configured output directory: absolute paths are kept, relative
/// ones are placed under `$SURFDIFF_OUTPUT_ROOT` when it is set.
pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::validation("output.dir", format!("{}: {e}", dir.display())))?;
    let meta = fs::metadata(dir)?;
    if meta.permissions().readonly() {
        return Err(Error::validation("output.dir", format!("{} is not writable", dir.display())));
    }
    Ok(())
}

fn write_resolved(dir: &Path, cfg: ConfigFile) -> Result<()> {
    fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.to_toml()?)?;
    Ok(())
}

/// Aggregate statistics of one diffuse-interface trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryStats {
    pub steps: usize,
    pub t: f64,
    pub u: ScalarField,
    pub w: ScalarField,
    /// Largest `|M(t) - M(0)| / |M(0)|` over all steps.
    pub max_mass_drift: f64,
    /// Extremes of `u` over all steps.
    pub u_min: f64,
    pub u_max: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// Largest single-step relative energy increase (0 if never increasing).
    pub max_energy_increase: f64,
    pub max_iterations: usize,
    /// Level-set semi-axis at the final time, if the contour was found.
    pub final_ax: Option<f64>,
}

struct Schedule {
    diagnostics_every: usize,
    snapshot_every: Option<usize>,
    level_set_every: Option<usize>,
}

/// Integrates from `u0` writing diagnostics (and optionally snapshots and
/// level sets) into `dir`. On failure everything written so far is flushed and
/// the last accepted state is saved as `snapshot_last.vtk`.
fn integrate_with_output(u0: &ScalarField, cfg: &ModelConfig, dir: &Path, sched: &Schedule) -> Result<TrajectoryStats> {
    let steps = cfg.steps();
    let w0 = chemical_potential(u0, cfg)?;
    let mut diag = DiagnosticsWriter::create(&dir.join(DIAGNOSTICS_FILE), cfg)?;
    let rec0 = DiagnosticsRecord::measure(0, 0.0, u0, &w0, cfg, true)?;
    diag.write(&rec0)?;
    if sched.snapshot_every.is_some() {
        write_vtk(&dir.join(snapshot_name(0)), u0, &w0, 0, 0.0)?;
    }
    if sched.level_set_every.is_some() {
        emit_level_set(dir, u0, 0, 0.0);
    }
    let mass0 = rec0.mass;
    let mut stats = TrajectoryStats {
        steps: 0,
        t: 0.0,
        u: u0.clone(),
        w: w0,
        max_mass_drift: 0.0,
        u_min: rec0.u_min,
        u_max: rec0.u_max,
        energy_initial: rec0.energy,
        energy_final: rec0.energy,
        max_energy_increase: 0.0,
        max_iterations: 0,
        final_ax: rec0.a_x,
    };
    let outcome = solver::run(u0, cfg, |rec| {
        let (u, w) = (&rec.result.u_next, &rec.result.w_next);
        let n = rec.step;
        let last = n == steps;
        let mass = integrate(u);
        let e = energy(u, cfg)?;
        stats.max_mass_drift = stats.max_mass_drift.max(((mass - mass0) / mass0).abs());
        stats.u_min = stats.u_min.min(u.min());
        stats.u_max = stats.u_max.max(u.max());
        let rel_increase = (e - stats.energy_final) / stats.energy_final.abs();
        stats.max_energy_increase = stats.max_energy_increase.max(rel_increase);
        stats.energy_final = e;
        stats.max_iterations = stats.max_iterations.max(rec.result.iterations);
        let level_due = sched.level_set_every.is_some_and(|k| n % k == 0);
        if n % sched.diagnostics_every == 0 || last {
            let mut r = DiagnosticsRecord::measure(n, rec.t, u, w, cfg, level_due || last)?;
            r.iterations = rec.result.iterations;
            r.residual = rec.result.residual;
            if last {
                stats.final_ax = r.a_x;
            }
            diag.write(&r)?;
        } else if last {
            stats.final_ax = extract_level_set(u, 0.5).ok().map(|ls| measure_ax(&ls.curve));
        }
        if sched.snapshot_every.is_some_and(|k| n % k == 0) || (last && sched.snapshot_every.is_some()) {
            write_vtk(&dir.join(snapshot_name(n)), u, w, n, rec.t)?;
        }
        if level_due || (last && sched.level_set_every.is_some()) {
            emit_level_set(dir, u, n, rec.t);
        }
        stats.steps = n;
        stats.t = rec.t;
        stats.u = u.clone();
        stats.w = w.clone();
        Ok(())
    });
    match outcome {
        Ok(_) => {
            diag.finish()?;
            Ok(stats)
        }
        Err(e) => {
            // keep what we have; the original error is what gets reported
            let _ = diag.finish();
            if let Err(io) = write_vtk(&dir.join("snapshot_last.vtk"), &stats.u, &stats.w, stats.steps, stats.t) {
                log::warn!("could not save the last state: {io}");
            }
            Err(e)
        }
    }
}

fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:06}.vtk")
}

fn emit_level_set(dir: &Path, u: &ScalarField, step: usize, t: f64) {
    let path = dir.join(format!("levelset_{step:06}.csv"));
    match extract_level_set(u, 0.5) {
        Ok(ls) => {
            if let Err(e) = write_level_set(&path, &ls.curve, 0.5, step, t) {
                log::warn!("level set at step {step}: {e}");
            }
        }
        Err(e) => log::warn!("no level set at step {step}: {e}"),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub stats: TrajectoryStats,
}

/// Runs one simulation described by `cfg`, writing into the resolved output
/// directory.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunReport> {
    let dir = resolve_output_dir(&cfg.output.dir);
    prepare_dir(&dir)?;
    write_resolved(&dir, ConfigFile::Run(cfg.clone()))?;
    let u0 = cfg.shape.tanh_field(cfg.grid, cfg.model.epsilon)?;
    log::info!(
        "{} run: epsilon {}, p {}, grid {}x{}, {} steps",
        cfg.model.kind,
        cfg.model.epsilon,
        cfg.model.p,
        cfg.grid.nx,
        cfg.grid.ny,
        cfg.model.steps()
    );
    let sched = Schedule {
        diagnostics_every: cfg.output.diagnostics_every,
        snapshot_every: Some(cfg.output.snapshot_every),
        level_set_every: Some(cfg.output.level_set_every),
    };
    let stats = integrate_with_output(&u0, &cfg.model, &dir, &sched)?;
    Ok(RunReport { dir, stats })
}

#[derive(Debug, Clone)]
pub struct SharpReport {
    pub dir: PathBuf,
    pub samples: Vec<SharpSample>,
    pub steps: usize,
}

/// Evolves `shape`'s boundary by surface diffusion to `t_end`; samples are
/// taken at every observation time.
pub fn sharp_reference(
    shape: &Shape,
    points: usize,
    t_end: f64,
    opts: &SiOptions,
    mut per_sample: impl FnMut(f64, &crate::curve::Curve) -> Result<()>,
) -> Result<(Vec<SharpSample>, usize)> {
    let curve = shape.boundary_curve(points)?;
    let mut samples = Vec::new();
    let outcome = si_run(&curve, t_end, opts, |t, c| {
        samples.push(SharpSample::of(t, c));
        per_sample(t, c)
    })?;
    Ok((samples, outcome.steps))
}

pub fn run_sharp(cfg: &SharpConfig) -> Result<SharpReport> {
    let dir = resolve_output_dir(&cfg.output.dir);
    prepare_dir(&dir)?;
    write_resolved(&dir, ConfigFile::Sharp(cfg.clone()))?;
    let mut traj = create(&dir.join(TRAJECTORY_FILE))?;
    writeln!(traj, "# surfdiff trajectory v1 points={}", cfg.points)?;
    writeln!(traj, "{TRAJECTORY_COLUMNS}")?;
    let mut opts = cfg.options;
    if opts.observe_interval.is_none() {
        opts.observe_interval = Some(cfg.t_end / 100.0);
    }
    let result = sharp_reference(&cfg.shape, cfg.points, cfg.t_end, &opts, |t, c| {
        write_trajectory_rows(&mut traj, t, c)?;
        Ok(())
    });
    traj.flush()?;
    let (samples, steps) = result?;
    write_sharp_ax(&dir.join(SHARP_AX_FILE), &samples)?;
    Ok(SharpReport { dir, samples, steps })
}

/// One `(model, epsilon)` cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: SweepModel,
    pub epsilon: f64,
    pub nx: usize,
    pub ax_sharp: f64,
    /// `Err(message)` if the cell failed.
    pub outcome: std::result::Result<CellResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub steps: usize,
    pub ax_diffuse: f64,
    pub delta: f64,
    pub mass_drift: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub max_energy_increase: f64,
}

impl SweepRow {
    pub fn delta(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|c| c.delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub model: SweepModel,
    pub epsilon_coarse: f64,
    pub epsilon_fine: f64,
    pub delta_coarse: f64,
    pub delta_fine: f64,
    /// `ln(delta_coarse / delta_fine) / ln(epsilon_coarse / epsilon_fine)`.
    pub order: f64,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeRow>,
    pub sharp: Vec<SharpSample>,
}

impl SweepTable {
    pub fn row(&self, model: SweepModel, epsilon: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.model == model && r.epsilon == epsilon)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

fn cell_dir(root: &Path, m: SweepModel, eps: f64) -> PathBuf {
    root.join("cells").join(format!("{}_p{}_eps{}", m.kind, m.p, eps))
}

fn run_cell(cfg: &SweepConfig, root: &Path, m: SweepModel, eps: f64, ax_sharp: f64) -> Result<CellResult> {
    let model = cfg.model_for(m, eps)?;
    let grid = cfg.grid_for(eps)?;
    let dir = cell_dir(root, m, eps);
    fs::create_dir_all(&dir)?;
    let u0 = cfg.shape.tanh_field(grid, eps)?;
    let sched = Schedule {
        diagnostics_every: cfg.output.diagnostics_every,
        snapshot_every: None,
        level_set_every: Some(cfg.output.level_set_every.max(model.steps())),
    };
    let stats = integrate_with_output(&u0, &model, &dir, &sched)?;
    let ax = stats.final_ax.ok_or(Error::NoCrossing(0.5))?;
    Ok(CellResult {
        steps: stats.steps,
        ax_diffuse: ax,
        delta: delta_metric(ax, ax_sharp)?,
        mass_drift: stats.max_mass_drift,
        u_min: stats.u_min,
        u_max: stats.u_max,
        energy_initial: stats.energy_initial,
        energy_final: stats.energy_final,
        max_energy_increase: stats.max_energy_increase,
    })
}

/// Runs every `(model, epsilon)` cell to `t_bar` on up to `workers` threads
/// and compares each against a single sharp-interface reference.
pub fn run_convergence_sweep(cfg: &SweepConfig, workers: usize) -> Result<SweepTable> {
    if workers == 0 {
        return Err(Error::validation("workers", "must be >= 1"));
    }
    let dir = resolve_output_dir(&cfg.output.dir);
    prepare_dir(&dir)?;
    write_resolved(&dir, ConfigFile::Sweep(cfg.clone()))?;

    // the reference is shared by every cell
    let mut opts = cfg.sharp_options;
    if opts.observe_interval.is_none() {
        opts.observe_interval = Some(cfg.t_bar / 30.0);
    }
    let (sharp, _) = sharp_reference(&cfg.shape, cfg.sharp_points, cfg.t_bar, &opts, |_, _| Ok(()))?;
    write_sharp_ax(&dir.join(SHARP_AX_FILE), &sharp)?;
    let ax_sharp = sharp.last().expect("at least the initial sample").a_x;
    log::info!("sharp-interface reference: A_x({}) = {ax_sharp}", cfg.t_bar);

    let cells: Vec<(SweepModel, f64)> = cfg
        .models
        .iter()
        .flat_map(|&m| cfg.epsilons.iter().map(move |&e| (m, e)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation("workers", e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, eps)| {
                let nx = cfg.grid_for(eps).map(|g| g.nx).unwrap_or(0);
                let outcome = run_cell(cfg, &dir, m, eps, ax_sharp).map_err(|e| {
                    log::error!("cell {} epsilon {eps} failed: {e}", m.label());
                    e.to_string()
                });
                if let Ok(c) = &outcome {
                    log::info!("cell {} epsilon {eps}: delta {:e}", m.label(), c.delta);
                }
                SweepRow {
                    model: m,
                    epsilon: eps,
                    nx,
                    ax_sharp,
                    outcome,
                }
            })
            .collect()
    });
    let slopes = slopes(cfg, &rows);
    let table = SweepTable {
        dir: dir.clone(),
        rows,
        slopes,
        sharp,
    };
    write_sweep_csv(&dir.join(SWEEP_FILE), cfg, &table)?;
    write_slopes_csv(&dir.join(SLOPES_FILE), &table.slopes)?;
    Ok(table)
}

fn slopes(cfg: &SweepConfig, rows: &[SweepRow]) -> Vec<SlopeRow> {
    let delta_of = |m: SweepModel, e: f64| rows.iter().find(|r| r.model == m && r.epsilon == e).and_then(SweepRow::delta);
    let mut out = Vec::new();
    for &m in &cfg.models {
        for pair in cfg.epsilons.windows(2) {
            if let (Some(dc), Some(df)) = (delta_of(m, pair[0]), delta_of(m, pair[1])) {
                out.push(SlopeRow {
                    model: m,
                    epsilon_coarse: pair[0],
                    epsilon_fine: pair[1],
                    delta_coarse: dc,
                    delta_fine: df,
                    order: (dc / df).ln() / (pair[0] / pair[1]).ln(),
                });
            }
        }
    }
    out
}

fn csv_escape(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

fn write_sweep_csv(path: &Path, cfg: &SweepConfig, table: &SweepTable) -> Result<()> {
    let mut out = create(path)?;
    writeln!(
        out,
        "# surfdiff sweep v1 t_bar={} sharp_points={}",
        fmt_f64(cfg.t_bar),
        cfg.sharp_points
    )?;
    writeln!(out, "{SWEEP_COLUMNS}")?;
    for r in &table.rows {
        let head = format!(
            "{},{},{},{}",
            r.model.kind,
            fmt_f64(r.model.p),
            fmt_f64(r.epsilon),
            r.nx
        );
        match &r.outcome {
            Ok(c) => writeln!(
                out,
                "{head},{},{},{},{},{},{},{},{},{},{},ok",
                c.steps,
                fmt_f64(c.ax_diffuse),
                fmt_f64(r.ax_sharp),
                fmt_f64(c.delta),
                fmt_f64(c.mass_drift),
                fmt_f64(c.u_min),
                fmt_f64(c.u_max),
                fmt_f64(c.energy_initial),
                fmt_f64(c.energy_final),
                fmt_f64(c.max_energy_increase),
            )?,
            Err(msg) => writeln!(
                out,
                "{head},,,{},,,,,,,,{}",
                fmt_f64(r.ax_sharp),
                csv_escape(&format!("failed: {msg}"))
            )?,
        }
    }
    out.flush()?;
    Ok(())
}

fn write_slopes_csv(path: &Path, slopes: &[SlopeRow]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# surfdiff slopes v1")?;
    writeln!(out, "{SLOPES_COLUMNS}")?;
    for s in slopes {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.model.kind,
            fmt_f64(s.model.p),
            fmt_f64(s.epsilon_coarse),
            fmt_f64(s.epsilon_fine),
            fmt_f64(s.delta_coarse),
            fmt_f64(s.delta_fine),
            fmt_f64(s.order)
        )?;
    }
    out.flush()?;
    Ok(())
}
