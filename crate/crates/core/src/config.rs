//! TOML experiment configuration.
//!
//! Three file shapes share the same flat tables:
//!
//! * a run (`[model]` present): `[grid]`, `[model]`, `[shape]`, `[output]`;
//! * a sweep (`[sweep]` present): `[grid]`, `[sweep]`, `[shape]`, `[sharp]`, `[output]`;
//! * a sharp-interface run (only `[sharp]`): `[shape]`, `[sharp]`, `[output]`.
//!
//! Unknown keys are rejected; every omitted value takes its documented default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::PotentialParams;
use crate::shape::Shape;
use crate::sharp::SiOptions;
use crate::solver::{
    default_normalization, ModelConfig, ModelKind, Normalization, DEFAULT_ALPHA, DEFAULT_SOLVER_MAX_ITER,
    DEFAULT_SOLVER_TOL, DEFAULT_TAU_PER_EPSILON,
};
use crate::sparse::{KrylovMethod, PreconditionerKind};

pub const DEFAULT_DOMAIN: f64 = 4.0;
/// Grid spacing as a fraction of `epsilon`.
pub const CELLS_PER_EPSILON: f64 = 10.0;
pub const DEFAULT_T_BAR: f64 = 3e-4;
pub const DEFAULT_SHARP_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_every: usize,
    pub diagnostics_every: usize,
    pub level_set_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelConfig,
    pub shape: Shape,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpConfig {
    pub shape: Shape,
    pub points: usize,
    pub t_end: f64,
    pub options: SiOptions,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepModel {
    pub kind: ModelKind,
    pub p: f64,
}

impl SweepModel {
    pub fn label(&self) -> String {
        format!("{}:{}", self.kind, self.p)
    }
}

impl std::str::FromStr for SweepModel {
    type Err = Error;

    /// `KIND` or `KIND:p`, e.g. `DCH`, `NV:1`, `V:1.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, p) = match s.split_once(':') {
            Some((k, p)) => (
                k.trim().parse::<ModelKind>()?,
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation("sweep.models", format!("bad exponent in `{s}`")))?,
            ),
            None => (s.trim().parse::<ModelKind>()?, 0.0),
        };
        Ok(SweepModel { kind, p })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub lx: f64,
    pub ly: f64,
    /// Fixed resolution; by default each epsilon gets `h = epsilon / 10`.
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub models: Vec<SweepModel>,
    /// Sorted descending.
    pub epsilons: Vec<f64>,
    pub t_bar: f64,
    pub alpha: f64,
    pub tau_per_epsilon: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub shape: Shape,
    pub sharp_points: usize,
    pub sharp_options: SiOptions,
    pub output: OutputConfig,
}

impl SweepConfig {
    /// Grid used for one epsilon.
    pub fn grid_for(&self, epsilon: f64) -> Result<GridSpec> {
        let (nx, ny) = resolution(self.nx, self.ny, self.lx, self.ly, epsilon);
        GridSpec::new(nx, ny, self.lx, self.ly, [-0.5 * self.lx, -0.5 * self.ly])
    }

    /// Model configuration for one sweep cell.
    pub fn model_for(&self, model: SweepModel, epsilon: f64) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(model.kind, epsilon, model.p)?;
        cfg.alpha = self.alpha;
        cfg.tau = self.tau_per_epsilon * epsilon;
        cfg.t_end = self.t_bar;
        cfg.solver_tol = self.solver_tol;
        cfg.solver_max_iter = self.solver_max_iter;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Run(RunConfig),
    Sweep(SweepConfig),
    Sharp(SharpConfig),
}

/// Cells needed along a side of length `l` for spacing at most `epsilon / 10`.
pub fn cells_for(l: f64, epsilon: f64) -> usize {
    let n = l * CELLS_PER_EPSILON / epsilon;
    // tolerate rounding noise so that 4 / 0.02 gives 200, not 201
    (n * (1.0 - 1e-12)).ceil() as usize
}

/// Cell counts: explicit values win; a lone `nx` (or `ny`) fixes the spacing of
/// both axes; otherwise the spacing is `epsilon / 10`.
fn resolution(nx: Option<usize>, ny: Option<usize>, lx: f64, ly: f64, epsilon: f64) -> (usize, usize) {
    let follow = |n: usize, from: f64, to: f64| ((n as f64 * to / from).round() as usize).max(1);
    match (nx, ny) {
        (Some(x), Some(y)) => (x, y),
        (Some(x), None) => (x, follow(x, lx, ly)),
        (None, Some(y)) => (follow(y, ly, lx), y),
        (None, None) => (cells_for(lx, epsilon), cells_for(ly, epsilon)),
    }
}

// ---------------------------------------------------------------------------
// raw file representation

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<RawGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<Shape>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<RawSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sharp: Option<RawSharp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(skip_serializing_if = "Option::is_none")]
    nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ny: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ly: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawNormalization {
    Energy,
    Diffusion,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalization: Option<RawNormalization>,
    /// Explicit restriction coefficient; overrides `normalization`.
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    krylov: Option<KrylovMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preconditioner: Option<PreconditionerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gmres_restart: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    models: Vec<String>,
    epsilons: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_per_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_max_iter: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSharp {
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resample_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    intersection_check_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observe_interval: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level_set_every: Option<usize>,
}

// ---------------------------------------------------------------------------
// loading

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path)
}

/// Parses configuration text; `path` is used in error messages only.
pub fn parse_config(text: &str, path: &Path) -> Result<ConfigFile> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    resolve(raw)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn resolve(raw: RawFile) -> Result<ConfigFile> {
    let shape = raw.shape.unwrap_or_default();
    shape.validate()?;
    match (&raw.model, &raw.sweep) {
        (Some(_), Some(_)) => Err(Error::validation("sweep", "a file holds either [model] or [sweep], not both")),
        (Some(_), None) => {
            if raw.sharp.is_some() {
                return Err(Error::validation("sharp", "[sharp] is not used by a single run"));
            }
            resolve_run(raw, shape).map(ConfigFile::Run)
        }
        (None, Some(_)) => resolve_sweep(raw, shape).map(ConfigFile::Sweep),
        (None, None) => {
            if raw.sharp.is_none() {
                return Err(Error::validation(
                    "model",
                    "need a [model] (run), [sweep] (convergence sweep) or [sharp] (curve run) table",
                ));
            }
            if raw.grid.is_some() {
                return Err(Error::validation("grid", "[grid] is not used by a sharp-interface run"));
            }
            resolve_sharp(raw, shape).map(ConfigFile::Sharp)
        }
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(field, format!("must be > 0, got {v}")))
    }
}

fn resolve_output(raw: Option<RawOutput>) -> Result<OutputConfig> {
    let raw = raw.unwrap_or_default();
    let out = OutputConfig {
        dir: raw.dir.unwrap_or_else(|| PathBuf::from("surfdiff-out")),
        snapshot_every: raw.snapshot_every.unwrap_or(50),
        diagnostics_every: raw.diagnostics_every.unwrap_or(1),
        level_set_every: raw.level_set_every.unwrap_or(50),
    };
    for (name, v) in [
        ("output.snapshot_every", out.snapshot_every),
        ("output.diagnostics_every", out.diagnostics_every),
        ("output.level_set_every", out.level_set_every),
    ] {
        if v == 0 {
            return Err(Error::validation(name, "must be >= 1"));
        }
    }
    if out.dir.as_os_str().is_empty() {
        return Err(Error::validation("output.dir", "must not be empty"));
    }
    Ok(out)
}

fn resolve_run(raw: RawFile, shape: Shape) -> Result<RunConfig> {
    let m = raw.model.expect("checked by caller");
    let epsilon = positive("model.epsilon", m.epsilon)?;
    let p = match (m.kind, m.p) {
        (ModelKind::DCH, Some(p)) if p != 0.0 => {
            return Err(Error::validation("model.p", "the DCH model has p = 0"));
        }
        (ModelKind::DCH, _) => 0.0,
        (_, Some(p)) => p,
        (_, None) => return Err(Error::validation("model.p", "required for V and NV models")),
    };
    let normalization = match (m.coefficient, m.normalization) {
        (Some(_), Some(_)) => {
            return Err(Error::validation("model.coefficient", "give either `normalization` or `coefficient`"))
        }
        (Some(c), None) => Normalization::Custom(c),
        (None, Some(RawNormalization::Energy)) => Normalization::Energy,
        (None, Some(RawNormalization::Diffusion)) => Normalization::Diffusion,
        (None, None) => default_normalization(m.kind),
    };
    let pot = PotentialParams::default();
    let tau = m.tau.unwrap_or(DEFAULT_TAU_PER_EPSILON * epsilon);
    let model = ModelConfig {
        kind: m.kind,
        epsilon,
        p,
        alpha: m.alpha.unwrap_or(DEFAULT_ALPHA),
        normalization,
        tau,
        t_end: m.t_end.unwrap_or(DEFAULT_T_BAR),
        solver_tol: m.solver_tol.unwrap_or(DEFAULT_SOLVER_TOL),
        solver_max_iter: m.solver_max_iter.unwrap_or(DEFAULT_SOLVER_MAX_ITER),
        krylov: m.krylov.unwrap_or(KrylovMethod::Bicgstab),
        preconditioner: m.preconditioner.unwrap_or(PreconditionerKind::Ilu0),
        gmres_restart: m.gmres_restart.unwrap_or(60),
        potential: PotentialParams {
            omega: m.omega.unwrap_or(pot.omega),
            mu: m.mu.unwrap_or(pot.mu),
        },
    };
    model.validate().map_err(|e| match e {
        Error::Validation { field, message } => Error::Validation {
            field: format!("model.{field}"),
            message,
        },
        other => other,
    })?;
    let g = raw.grid.unwrap_or_default();
    let lx = positive("grid.lx", g.lx.unwrap_or(DEFAULT_DOMAIN))?;
    let ly = positive("grid.ly", g.ly.unwrap_or(lx))?;
    let (nx, ny) = resolution(g.nx, g.ny, lx, ly, epsilon);
    let grid = GridSpec::new(nx, ny, lx, ly, [-0.5 * lx, -0.5 * ly]).map_err(|e| match e {
        Error::InvalidGrid(msg) => Error::validation("grid", msg),
        other => other,
    })?;
    warn_if_coarse(&grid, epsilon);
    Ok(RunConfig {
        grid,
        model,
        shape,
        output: resolve_output(raw.output)?,
    })
}

fn warn_if_coarse(grid: &GridSpec, epsilon: f64) {
    let target = epsilon / CELLS_PER_EPSILON;
    if grid.hx() > target * (1.0 + 1e-9) || grid.hy() > target * (1.0 + 1e-9) {
        log::warn!(
            "grid spacing ({:.4}, {:.4}) is coarser than epsilon / {CELLS_PER_EPSILON} = {target:.4}",
            grid.hx(),
            grid.hy()
        );
    }
}

fn resolve_sharp_options(raw: &RawSharp) -> Result<(usize, SiOptions)> {
    let d = SiOptions::default();
    let opts = SiOptions {
        dt_factor: positive("sharp.dt_factor", raw.dt_factor.unwrap_or(d.dt_factor))?,
        dt: raw.dt.map(|v| positive("sharp.dt", v)).transpose()?,
        resample_every: raw.resample_every.unwrap_or(d.resample_every),
        intersection_check_every: raw.intersection_check_every.unwrap_or(d.intersection_check_every),
        observe_interval: raw.observe_interval.map(|v| positive("sharp.observe_interval", v)).transpose()?,
    };
    if opts.resample_every == 0 {
        return Err(Error::validation("sharp.resample_every", "must be >= 1"));
    }
    if opts.intersection_check_every == 0 {
        return Err(Error::validation("sharp.intersection_check_every", "must be >= 1"));
    }
    let points = raw.points.unwrap_or(DEFAULT_SHARP_POINTS);
    if points < crate::curve::MIN_CURVE_POINTS {
        return Err(Error::validation("sharp.points", format!("must be >= {}", crate::curve::MIN_CURVE_POINTS)));
    }
    Ok((points, opts))
}

fn resolve_sharp(raw: RawFile, shape: Shape) -> Result<SharpConfig> {
    let s = raw.sharp.expect("checked by caller");
    let (points, options) = resolve_sharp_options(&s)?;
    let t_end = positive("sharp.t_end", s.t_end.unwrap_or(DEFAULT_T_BAR))?;
    Ok(SharpConfig {
        shape,
        points,
        t_end,
        options,
        output: resolve_output(raw.output)?,
    })
}

fn resolve_sweep(raw: RawFile, shape: Shape) -> Result<SweepConfig> {
    let s = raw.sweep.expect("checked by caller");
    if s.models.is_empty() {
        return Err(Error::validation("sweep.models", "at least one model is required"));
    }
    let models = s.models.iter().map(|m| m.parse()).collect::<Result<Vec<SweepModel>>>()?;
    if s.epsilons.is_empty() {
        return Err(Error::validation("sweep.epsilons", "at least one epsilon is required"));
    }
    for &e in &s.epsilons {
        positive("sweep.epsilons", e)?;
    }
    if s.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("sweep.epsilons", "must be sorted strictly descending"));
    }
    let sharp = raw.sharp.unwrap_or_default();
    if sharp.t_end.is_some() {
        return Err(Error::validation("sharp.t_end", "a sweep compares at sweep.t_bar"));
    }
    let (sharp_points, sharp_options) = resolve_sharp_options(&sharp)?;
    let g = raw.grid.unwrap_or_default();
    let lx = positive("grid.lx", g.lx.unwrap_or(DEFAULT_DOMAIN))?;
    let ly = positive("grid.ly", g.ly.unwrap_or(lx))?;
    let cfg = SweepConfig {
        lx,
        ly,
        nx: g.nx,
        ny: g.ny,
        models,
        epsilons: s.epsilons,
        t_bar: positive("sweep.t_bar", s.t_bar.unwrap_or(DEFAULT_T_BAR))?,
        alpha: s.alpha.unwrap_or(DEFAULT_ALPHA),
        tau_per_epsilon: positive("sweep.tau_per_epsilon", s.tau_per_epsilon.unwrap_or(DEFAULT_TAU_PER_EPSILON))?,
        solver_tol: s.solver_tol.unwrap_or(DEFAULT_SOLVER_TOL),
        solver_max_iter: s.solver_max_iter.unwrap_or(DEFAULT_SOLVER_MAX_ITER),
        shape,
        sharp_points,
        sharp_options,
        output: resolve_output(raw.output)?,
    };
    // validate every cell up front so that bad combinations fail before any run
    for &m in &cfg.models {
        for &e in &cfg.epsilons {
            cfg.model_for(m, e).map_err(|err| match err {
                Error::Validation { field, message } => Error::Validation {
                    field: format!("sweep.models[{}]", m.label()),
                    message: format!("{field}: {message}"),
                },
                other => other,
            })?;
            let grid = cfg.grid_for(e).map_err(|err| Error::validation("grid", err.to_string()))?;
            warn_if_coarse(&grid, e);
        }
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// writing

fn raw_output(o: &OutputConfig) -> RawOutput {
    RawOutput {
        dir: Some(o.dir.clone()),
        snapshot_every: Some(o.snapshot_every),
        diagnostics_every: Some(o.diagnostics_every),
        level_set_every: Some(o.level_set_every),
    }
}

fn raw_sharp(points: usize, o: &SiOptions, t_end: Option<f64>) -> RawSharp {
    RawSharp {
        points: Some(points),
        t_end,
        dt_factor: Some(o.dt_factor),
        dt: o.dt,
        resample_every: Some(o.resample_every),
        intersection_check_every: Some(o.intersection_check_every),
        observe_interval: o.observe_interval,
    }
}

impl ConfigFile {
    /// Serializes the fully resolved configuration; reading it back yields an
    /// equal value.
    pub fn to_toml(&self) -> Result<String> {
        let raw = match self {
            ConfigFile::Run(r) => {
                let m = &r.model;
                let (normalization, coefficient) = match m.normalization {
                    Normalization::Energy => (Some(RawNormalization::Energy), None),
                    Normalization::Diffusion => (Some(RawNormalization::Diffusion), None),
                    Normalization::Custom(c) => (None, Some(c)),
                };
                RawFile {
                    grid: Some(RawGrid {
                        nx: Some(r.grid.nx),
                        ny: Some(r.grid.ny),
                        lx: Some(r.grid.lx),
                        ly: Some(r.grid.ly),
                    }),
                    model: Some(RawModel {
                        kind: m.kind,
                        epsilon: m.epsilon,
                        p: Some(m.p),
                        alpha: Some(m.alpha),
                        normalization,
                        coefficient,
                        tau: Some(m.tau),
                        t_end: Some(m.t_end),
                        solver_tol: Some(m.solver_tol),
                        solver_max_iter: Some(m.solver_max_iter),
                        krylov: Some(m.krylov),
                        preconditioner: Some(m.preconditioner),
                        gmres_restart: Some(m.gmres_restart),
                        omega: Some(m.potential.omega),
                        mu: Some(m.potential.mu),
                    }),
                    shape: Some(r.shape),
                    output: Some(raw_output(&r.output)),
                    ..RawFile::default()
                }
            }
            ConfigFile::Sweep(s) => RawFile {
                grid: Some(RawGrid {
                    nx: s.nx,
                    ny: s.ny,
                    lx: Some(s.lx),
                    ly: Some(s.ly),
                }),
                sweep: Some(RawSweep {
                    models: s.models.iter().map(SweepModel::label).collect(),
                    epsilons: s.epsilons.clone(),
                    t_bar: Some(s.t_bar),
                    alpha: Some(s.alpha),
                    tau_per_epsilon: Some(s.tau_per_epsilon),
                    solver_tol: Some(s.solver_tol),
                    solver_max_iter: Some(s.solver_max_iter),
                }),
                shape: Some(s.shape),
                sharp: Some(raw_sharp(s.sharp_points, &s.sharp_options, None)),
                output: Some(raw_output(&s.output)),
                ..RawFile::default()
            },
            ConfigFile::Sharp(s) => RawFile {
                shape: Some(s.shape),
                sharp: Some(raw_sharp(s.points, &s.options, Some(s.t_end))),
                output: Some(raw_output(&s.output)),
                ..RawFile::default()
            },
        };
        toml::to_string(&raw).map_err(|e| Error::validation("config", e.to_string()))
    }

    pub fn output(&self) -> &OutputConfig {
        match self {
            ConfigFile::Run(r) => &r.output,
            ConfigFile::Sweep(s) => &s.output,
            ConfigFile::Sharp(s) => &s.output,
        }
    }

    pub fn output_mut(&mut self) -> &mut OutputConfig {
        match self {
            ConfigFile::Run(r) => &mut r.output,
            ConfigFile::Sweep(s) => &mut s.output,
            ConfigFile::Sharp(s) => &mut s.output,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ConfigFile> {
        parse_config(text, Path::new("test.toml"))
    }

    const MINIMAL: &str = r#"
[model]
kind = "NV"
p = 1.0
epsilon = 0.2

[shape]
kind = "ellipse"
ax = 1.0
ay = 0.5
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let ConfigFile::Run(run) = parse(MINIMAL).unwrap() else {
            panic!("expected a run config")
        };
        assert!((run.model.tau - 2e-6).abs() < 1e-20);
        assert_eq!(run.model.alpha, 1e-4);
        assert_eq!(run.model.normalization, Normalization::Diffusion);
        assert_eq!((run.grid.nx, run.grid.ny), (200, 200));
        assert_eq!(run.grid.origin, [-2.0, -2.0]);
        assert_eq!(run.shape, Shape::Ellipse { ax: 1.0, ay: 0.5 });
        assert_eq!(run.model.steps(), 150);
    }

    #[test]
    fn validation_errors_name_the_field() {
        let v_p2 = MINIMAL.replace("\"NV\"", "\"V\"").replace("p = 1.0", "p = 2.0");
        match parse(&v_p2) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "model.p"),
            other => panic!("{other:?}"),
        }
        match parse(&MINIMAL.replace("0.2", "-0.2")) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "model.epsilon"),
            other => panic!("{other:?}"),
        }
        assert!(parse(&MINIMAL.replace("[shape]", "[output]\nsnapshot_every = 0\n[shape]")).unwrap_err().is_validation());
    }

    #[test]
    fn unknown_keys_are_parse_errors_with_position() {
        let text = MINIMAL.replace("epsilon = 0.2", "epsilon = 0.2\nepsilonn = 3");
        match parse(&text) {
            Err(Error::Parse { line, column, message, .. }) => {
                assert_eq!(line, 6, "{message}");
                assert_eq!(column, 1);
                assert!(message.contains("epsilonn"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse("[model\nkind = 1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn run_round_trip() {
        let cfg = parse(MINIMAL).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(parse(&text).unwrap(), cfg);
        let custom = MINIMAL.replace("p = 1.0", "p = 1.0\ncoefficient = 2.5\nkrylov = \"gmres\"");
        let cfg = parse(&custom).unwrap();
        assert_eq!(parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    const SWEEP: &str = r#"
[sweep]
models = ["DCH", "NV:1", "NV:2", "V:1"]
epsilons = [0.4, 0.2]

[sharp]
points = 128
"#;

    #[test]
    fn sweep_config_and_round_trip() {
        let ConfigFile::Sweep(s) = parse(SWEEP).unwrap() else { panic!() };
        assert_eq!(s.models.len(), 4);
        assert_eq!(s.models[0], SweepModel { kind: ModelKind::DCH, p: 0.0 });
        assert_eq!(s.t_bar, 3e-4);
        assert_eq!(s.grid_for(0.4).unwrap().nx, 100);
        assert_eq!(s.grid_for(0.2).unwrap().nx, 200);
        assert!((s.model_for(s.models[1], 0.4).unwrap().tau - 4e-6).abs() < 1e-20);
        let cfg = ConfigFile::Sweep(s);
        assert_eq!(parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn sweep_validation() {
        assert!(parse(&SWEEP.replace("[0.4, 0.2]", "[0.2, 0.4]")).unwrap_err().is_validation());
        assert!(parse(&SWEEP.replace("\"V:1\"", "\"V:2\"")).unwrap_err().is_validation());
        assert!(parse(&SWEEP.replace("\"DCH\"", "\"XYZ\"")).unwrap_err().is_validation());
    }

    #[test]
    fn sharp_config_and_round_trip() {
        let text = "[shape]\nkind = \"four_fold\"\nr0 = 1.0\na = 0.25\n\n[sharp]\nt_end = 0.01\nobserve_interval = 0.001\n";
        let cfg = parse(text).unwrap();
        let ConfigFile::Sharp(s) = &cfg else { panic!() };
        assert_eq!(s.points, 256);
        assert_eq!(s.options.resample_every, 10);
        assert_eq!(parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn cell_count_rounding() {
        assert_eq!(cells_for(4.0, 0.2), 200);
        assert_eq!(cells_for(4.0, 0.4), 100);
        assert_eq!(cells_for(4.0, 0.3), 134);
        assert_eq!(resolution(Some(48), None, 4.0, 4.0, 0.2), (48, 48));
        assert_eq!(resolution(None, Some(30), 8.0, 4.0, 0.2), (60, 30));
        assert_eq!(resolution(None, None, 8.0, 4.0, 0.2), (400, 200));
    }

    #[test]
    fn ambiguous_files_are_rejected() {
        assert!(parse("[output]\ndir = \"x\"\n").unwrap_err().is_validation());
        assert!(parse(&format!("{MINIMAL}\n{SWEEP}")).unwrap_err().is_validation());
    }
}
