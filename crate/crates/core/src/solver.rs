//! Linearly implicit time stepping for the three phase-field models.
//!
//! Each step assembles one coupled system for `(u^{n+1}, w^{n+1})` with every
//! nonlinear coefficient frozen at `u^n`, and solves it with a preconditioned
//! Krylov method. Unknowns are ordered `[u_0 .. u_{N-1}, w_0 .. w_{N-1}]`.
//!
//! Variational model (`chi = 1`):
//!
//! ```text
//! u'/tau - (1/eps) div(M(u) grad w') = u/tau
//! w' + eps div(g(u) grad u') - (1/eps)(r + chi s) u' + eps g'(u)(chi/2 - 1) grad u . grad u' = q
//! ```
//!
//! Non-variational and singly degenerate models:
//!
//! ```text
//! u'/tau - (1/eps) div(M(u) grad w') = u/tau
//! G(u) w' + eps lap u' - (1/eps) f''(u) u' = (1/eps) f'(u) - (1/eps) f''(u) u
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::model::{
    diffusion_restriction, double_well, double_well_d1, double_well_d2, energy_restriction,
    energy_restriction_d1, energy_restriction_d2, eta_star, gamma_star, mobility, PotentialParams,
    RestrictionParams,
};
use crate::sparse::{self, CsrBuilder, CsrMatrix, KrylovMethod, PreconditionerKind, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Variational doubly degenerate model (energy restriction `g`).
    V,
    /// Non-variational doubly degenerate model (diffusion restriction `G`).
    NV,
    /// Singly degenerate Cahn-Hilliard baseline.
    DCH,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::V => "V",
            ModelKind::NV => "NV",
            ModelKind::DCH => "DCH",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "V" => Ok(ModelKind::V),
            "NV" => Ok(ModelKind::NV),
            "DCH" => Ok(ModelKind::DCH),
            _ => Err(Error::validation("kind", format!("unknown model `{s}` (expected V, NV or DCH)"))),
        }
    }
}

/// How the restriction coefficient (`gamma` or `eta`) is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `gamma*(p)`: the tanh profile's energy equals the interface length.
    Energy,
    /// `eta*(p)`: the sharp-interface limit is exactly `v = lap_s kappa`.
    Diffusion,
    Custom(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub epsilon: f64,
    pub p: f64,
    pub alpha: f64,
    pub normalization: Normalization,
    pub tau: f64,
    pub t_end: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub krylov: KrylovMethod,
    pub preconditioner: PreconditionerKind,
    pub gmres_restart: usize,
    pub potential: PotentialParams,
}

pub const DEFAULT_ALPHA: f64 = 1e-4;
/// Timestep as a multiple of `epsilon`.
pub const DEFAULT_TAU_PER_EPSILON: f64 = 1e-5;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-9;
pub const DEFAULT_SOLVER_MAX_ITER: usize = 2000;

impl ModelConfig {
    /// Configuration with the default regularization, timestep and solver
    /// settings; `t_end` defaults to a single step.
    pub fn new(kind: ModelKind, epsilon: f64, p: f64) -> Result<Self> {
        let tau = DEFAULT_TAU_PER_EPSILON * epsilon;
        let cfg = ModelConfig {
            kind,
            epsilon,
            p: if kind == ModelKind::DCH { 0.0 } else { p },
            alpha: DEFAULT_ALPHA,
            normalization: default_normalization(kind),
            tau,
            t_end: tau,
            solver_tol: DEFAULT_SOLVER_TOL,
            solver_max_iter: DEFAULT_SOLVER_MAX_ITER,
            krylov: KrylovMethod::Bicgstab,
            preconditioner: PreconditionerKind::Ilu0,
            gmres_restart: 60,
            potential: PotentialParams::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(Error::validation("p", format!("must be >= 0, got {}", self.p)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::validation("tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.t_end >= self.tau) {
            return Err(Error::validation(
                "t_end",
                format!("must be at least one timestep ({}), got {}", self.tau, self.t_end),
            ));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(Error::validation("solver_tol", format!("must lie in (0, 1), got {}", self.solver_tol)));
        }
        if self.solver_max_iter == 0 {
            return Err(Error::validation("solver_max_iter", "must be positive"));
        }
        if self.gmres_restart == 0 {
            return Err(Error::validation("gmres_restart", "must be positive"));
        }
        if !(self.potential.omega > 0.0 && self.potential.mu > 0.0) {
            return Err(Error::validation("omega/mu", "must be positive"));
        }
        match self.kind {
            ModelKind::V => {
                if self.p >= 2.0 {
                    return Err(Error::validation(
                        "p",
                        format!("the variational model needs p < 2 for a finite energy, got {}", self.p),
                    ));
                }
                if self.normalization == Normalization::Diffusion {
                    return Err(Error::validation(
                        "normalization",
                        "the variational model uses the energy normalization or a custom coefficient",
                    ));
                }
            }
            ModelKind::NV => {
                if self.normalization == Normalization::Energy && self.p >= 2.0 {
                    return Err(Error::validation("normalization", "energy normalization needs p < 2"));
                }
            }
            ModelKind::DCH => {
                if self.p != 0.0 {
                    return Err(Error::validation("p", "the singly degenerate model has p = 0"));
                }
                if !matches!(self.normalization, Normalization::Custom(c) if c == 1.0) {
                    return Err(Error::validation("normalization", "the singly degenerate model has coefficient 1"));
                }
            }
        }
        if let Normalization::Custom(c) = self.normalization {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::validation("coefficient", format!("must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    /// `1` selects the variational system, `0` the non-variational one.
    pub fn chi(&self) -> f64 {
        match self.kind {
            ModelKind::V => 1.0,
            ModelKind::NV | ModelKind::DCH => 0.0,
        }
    }

    pub fn coefficient(&self) -> Result<f64> {
        match self.normalization {
            Normalization::Energy => gamma_star(self.p),
            Normalization::Diffusion => eta_star(self.p),
            Normalization::Custom(c) => Ok(c),
        }
    }

    pub fn restriction(&self) -> Result<RestrictionParams> {
        RestrictionParams::new(self.p, self.alpha, self.epsilon, self.coefficient()?)
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.tau) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
            method: self.krylov,
            preconditioner: self.preconditioner,
            restart: self.gmres_restart,
        }
    }
}

pub fn default_normalization(kind: ModelKind) -> Normalization {
    match kind {
        ModelKind::V => Normalization::Energy,
        ModelKind::NV => Normalization::Diffusion,
        ModelKind::DCH => Normalization::Custom(1.0),
    }
}

/// Assembled linear system for one step.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub grid: GridSpec,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub u_next: ScalarField,
    pub w_next: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

/// Pointwise linearization coefficients of the variational chemical potential.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub q: ScalarField,
    pub r: ScalarField,
    pub s: ScalarField,
}

struct Pointwise {
    g: f64,
    dg: f64,
    q: f64,
    r: f64,
    s: f64,
}

fn pointwise_terms(u: f64, chi: f64, eps: f64, pot: &PotentialParams, rp: &RestrictionParams) -> Result<Pointwise> {
    let f = double_well(u, pot);
    let df = double_well_d1(u, pot);
    let ddf = double_well_d2(u, pot);
    let g = energy_restriction(u, rp)?;
    // At the pure phases f = f' = 0; products with an unbounded derivative of
    // g take their limit 0 there.
    let dg = match energy_restriction_d1(u, rp) {
        Ok(v) => v,
        Err(_) if df == 0.0 => 0.0,
        Err(e) => return Err(e),
    };
    let ddg_f = if f == 0.0 { 0.0 } else { energy_restriction_d2(u, rp)? * f };
    let r = dg * df + g * ddf;
    let s = dg * df + ddg_f;
    let q = (g * df + chi * dg * f - (r + chi * s) * u) / eps;
    Ok(Pointwise { g, dg, q, r, s })
}

/// `q`, `r` and `s` evaluated cellwise at `u_n`.
pub fn linearization_terms(u_n: &ScalarField, config: &ModelConfig) -> Result<Linearization> {
    let rp = config.restriction()?;
    let chi = config.chi();
    let grid = *u_n.grid();
    let mut q = Vec::with_capacity(grid.len());
    let mut r = Vec::with_capacity(grid.len());
    let mut s = Vec::with_capacity(grid.len());
    for &u in u_n.values() {
        let t = pointwise_terms(u, chi, config.epsilon, &config.potential, &rp)?;
        q.push(t.q);
        r.push(t.r);
        s.push(t.s);
    }
    Ok(Linearization {
        q: ScalarField::from_values(grid, q)?,
        r: ScalarField::from_values(grid, r)?,
        s: ScalarField::from_values(grid, s)?,
    })
}

/// Mass-conservation rows `u'/tau - (1/eps) div(M grad w')`.
fn push_transport_rows(b: &mut CsrBuilder, u_n: &ScalarField, config: &ModelConfig, rp: &RestrictionParams) -> Vec<f64> {
    let g = *u_n.grid();
    let n = g.len();
    let m: Vec<f64> = u_n.values().iter().map(|&u| mobility(u, &config.potential, rp)).collect();
    let (cx, cy) = (
        1.0 / (config.epsilon * g.hx() * g.hx()),
        1.0 / (config.epsilon * g.hy() * g.hy()),
    );
    let inv_tau = 1.0 / config.tau;
    let mut rhs = Vec::with_capacity(2 * n);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            let nb = [
                (g.index(g.east(i), j), cx),
                (g.index(g.west(i), j), cx),
                (g.index(i, g.north(j)), cy),
                (g.index(i, g.south(j)), cy),
            ];
            let mut diag = 0.0;
            let mut row = Vec::with_capacity(6);
            row.push((k, inv_tau));
            for (kn, c) in nb {
                let face = c * 0.5 * (m[k] + m[kn]);
                row.push((n + kn, -face));
                diag += face;
            }
            row.push((n + k, diag));
            b.push_row(row);
            rhs.push(u_n.values()[k] * inv_tau);
        }
    }
    rhs
}

/// Assembles the variational (`chi = 1`) system.
pub fn assemble_model_v(u_n: &ScalarField, config: &ModelConfig) -> Result<SparseSystem> {
    if config.chi() != 1.0 {
        return Err(Error::Domain(format!(
            "the variational assembly needs chi = 1 ({} model given)",
            config.kind
        )));
    }
    assemble_chi_form(u_n, config, config.chi())
}

/// The `chi`-parameterized system written with the energy restriction `g`.
/// `chi = 0` gives the non-variational model multiplied through by `g`.
pub fn assemble_chi_form(u_n: &ScalarField, config: &ModelConfig, chi: f64) -> Result<SparseSystem> {
    let grid = *u_n.grid();
    let n = grid.len();
    let eps = config.epsilon;
    let rp = config.restriction()?;
    let terms = u_n
        .values()
        .iter()
        .map(|&u| pointwise_terms(u, chi, eps, &config.potential, &rp))
        .collect::<Result<Vec<_>>>()?;
    let un = u_n.values();

    let mut b = CsrBuilder::new(2 * n, 12 * n);
    let mut rhs = push_transport_rows(&mut b, u_n, config, &rp);
    let (ax, ay) = (eps / (grid.hx() * grid.hx()), eps / (grid.hy() * grid.hy()));
    let (cx, cy) = (0.5 / grid.hx(), 0.5 / grid.hy());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            let (e, w) = (grid.index(grid.east(i), j), grid.index(grid.west(i), j));
            let (no, so) = (grid.index(i, grid.north(j)), grid.index(i, grid.south(j)));
            let t = &terms[k];
            let mut row = Vec::with_capacity(11);
            row.push((n + k, 1.0));
            // eps div(g grad u')
            let mut diag = 0.0;
            for (kn, a) in [(e, ax), (w, ax), (no, ay), (so, ay)] {
                let face = a * 0.5 * (t.g + terms[kn].g);
                row.push((kn, face));
                diag -= face;
            }
            // -(1/eps)(r + chi s) u'
            diag -= (t.r + chi * t.s) / eps;
            row.push((k, diag));
            // eps g'(chi/2 - 1) grad u^n . grad u'
            let c = eps * t.dg * (0.5 * chi - 1.0);
            if c != 0.0 {
                let gx = (un[e] - un[w]) * cx;
                let gy = (un[no] - un[so]) * cy;
                row.push((e, c * gx * cx));
                row.push((w, -c * gx * cx));
                row.push((no, c * gy * cy));
                row.push((so, -c * gy * cy));
            }
            b.push_row(row);
            rhs.push(t.q);
        }
    }
    finish_system(grid, b, rhs)
}

/// Assembles the non-variational system; the singly degenerate model uses `G = 1`.
pub fn assemble_model_nv(u_n: &ScalarField, config: &ModelConfig) -> Result<SparseSystem> {
    if config.chi() != 0.0 {
        return Err(Error::Domain(format!(
            "the non-variational assembly needs chi = 0 ({} model given)",
            config.kind
        )));
    }
    let grid = *u_n.grid();
    let n = grid.len();
    let eps = config.epsilon;
    let rp = config.restriction()?;
    let pot = &config.potential;

    let mut b = CsrBuilder::new(2 * n, 12 * n);
    let mut rhs = push_transport_rows(&mut b, u_n, config, &rp);
    let (ax, ay) = (eps / (grid.hx() * grid.hx()), eps / (grid.hy() * grid.hy()));
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            let u = u_n.values()[k];
            let big_g = match config.kind {
                ModelKind::DCH => 1.0,
                _ => diffusion_restriction(u, &rp),
            };
            let ddf = double_well_d2(u, pot);
            let row = [
                (n + k, big_g),
                (grid.index(grid.east(i), j), ax),
                (grid.index(grid.west(i), j), ax),
                (grid.index(i, grid.north(j)), ay),
                (grid.index(i, grid.south(j)), ay),
                (k, -2.0 * (ax + ay) - ddf / eps),
            ];
            b.push_row(row);
            rhs.push((double_well_d1(u, pot) - ddf * u) / eps);
        }
    }
    finish_system(grid, b, rhs)
}

fn finish_system(grid: GridSpec, b: CsrBuilder, rhs: Vec<f64>) -> Result<SparseSystem> {
    let matrix = b.finish();
    if !matrix.is_finite() || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assembled system".into()));
    }
    Ok(SparseSystem { grid, matrix, rhs })
}

pub fn assemble(u_n: &ScalarField, config: &ModelConfig) -> Result<SparseSystem> {
    match config.kind {
        ModelKind::V => assemble_model_v(u_n, config),
        ModelKind::NV | ModelKind::DCH => assemble_model_nv(u_n, config),
    }
}

/// Solves an assembled system starting from `guess = (u, w)` when given.
pub fn solve(
    system: &SparseSystem,
    config: &ModelConfig,
    guess: Option<(&ScalarField, &ScalarField)>,
) -> Result<StepResult> {
    let n = system.grid.len();
    let x0 = guess.map(|(u, w)| {
        let mut x = Vec::with_capacity(2 * n);
        x.extend_from_slice(u.values());
        x.extend_from_slice(w.values());
        x
    });
    // Scaling the transport rows by tau balances both halves of the residual,
    // so the relative tolerance also bounds the mass defect.
    let mut scale = vec![config.tau; 2 * n];
    scale[n..].fill(1.0);
    let mut matrix = system.matrix.clone();
    matrix.scale_rows(&scale);
    let rhs: Vec<f64> = system.rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();
    let opts = config.solve_options();
    let out = match sparse::solve(&matrix, &rhs, x0.as_deref(), &opts) {
        Err(Error::NonConvergence { iterations, residual }) if opts.method == KrylovMethod::Bicgstab => {
            log::warn!("BiCGStab stalled ({iterations} iterations, residual {residual:e}); retrying with GMRES");
            let retry = SolveOptions {
                method: KrylovMethod::Gmres,
                ..opts
            };
            let mut out = sparse::solve(&matrix, &rhs, x0.as_deref(), &retry)?;
            out.iterations += iterations;
            out
        }
        other => other?,
    };
    let mut x = out.x;
    let w = x.split_off(n);
    Ok(StepResult {
        u_next: ScalarField::from_values(system.grid, x)?,
        w_next: ScalarField::from_values(system.grid, w)?,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// One step from `u_n`, warm-starting the Krylov solve at `(u_n, w_guess)`.
pub fn step_from(u_n: &ScalarField, w_guess: Option<&ScalarField>, config: &ModelConfig) -> Result<StepResult> {
    let system = assemble(u_n, config)?;
    let zero;
    let w0 = match w_guess {
        Some(w) => w,
        None => {
            zero = ScalarField::zeros(*u_n.grid());
            &zero
        }
    };
    solve(&system, config, Some((u_n, w0)))
}

pub fn step(u_n: &ScalarField, config: &ModelConfig) -> Result<StepResult> {
    step_from(u_n, None, config)
}

/// Handed to run observers after every step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    /// Index of the step just taken, starting at 1.
    pub step: usize,
    pub t: f64,
    pub result: &'a StepResult,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub u: ScalarField,
    pub w: ScalarField,
    pub steps: usize,
    pub t: f64,
    pub total_iterations: usize,
}

/// Integrates from `u0` to `config.t_end` with a fixed timestep.
///
/// `observe` sees every step; an error from it aborts the run.
pub fn run<F>(u0: &ScalarField, config: &ModelConfig, mut observe: F) -> Result<RunSummary>
where
    F: FnMut(&StepRecord<'_>) -> Result<()>,
{
    config.validate()?;
    let steps = config.steps();
    let mut u = u0.clone();
    let mut w = ScalarField::zeros(*u0.grid());
    let mut total_iterations = 0;
    for n in 1..=steps {
        let result = step_from(&u, Some(&w), config).map_err(|e| match e {
            Error::NonConvergence { .. } | Error::NonFinite(_) | Error::Singular(_) => {
                log::error!(
                    "step {n} (t = {:e}) failed: {e}; u in [{:e}, {:e}]",
                    (n - 1) as f64 * config.tau,
                    u.min(),
                    u.max()
                );
                e
            }
            other => other,
        })?;
        if !result.u_next.is_finite() || !result.w_next.is_finite() {
            return Err(Error::NonFinite(format!("state after step {n}")));
        }
        total_iterations += result.iterations;
        let t = n as f64 * config.tau;
        observe(&StepRecord {
            step: n,
            t,
            result: &result,
        })?;
        u = result.u_next;
        w = result.w_next;
    }
    Ok(RunSummary {
        u,
        w,
        steps,
        t: steps as f64 * config.tau,
        total_iterations,
    })
}
