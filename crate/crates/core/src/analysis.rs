//! Measurements on fields and curves.

use serde::{Deserialize, Serialize};

use crate::curve::{Curve, Point};
use crate::error::{Error, Result};
use crate::grid::{div_coeff_grad, face_gradient_sq, grad_dot_grad, integrate, laplacian, ScalarField};
use crate::model::{
    diffusion_restriction, double_well, double_well_d1, energy_restriction, energy_restriction_d1, mobility,
};
use crate::solver::{ModelConfig, ModelKind};

/// Free energy `int g(u) (f(u)/eps + eps/2 |grad u|^2) dx`.
///
/// Only the variational model carries the restriction `g`; the other models
/// report the unrestricted energy (`g = 1`), which for the non-variational
/// model is a monitor rather than a Lyapunov functional.
pub fn energy(u: &ScalarField, config: &ModelConfig) -> Result<f64> {
    let eps = config.epsilon;
    let pot = &config.potential;
    let grad2 = face_gradient_sq(u);
    let density: Vec<f64> = match config.kind {
        ModelKind::V => {
            let rp = config.restriction()?;
            u.values()
                .iter()
                .zip(grad2.values())
                .map(|(&v, &g2)| Ok(energy_restriction(v, &rp)? * (double_well(v, pot) / eps + 0.5 * eps * g2)))
                .collect::<Result<_>>()?
        }
        ModelKind::NV | ModelKind::DCH => u
            .values()
            .iter()
            .zip(grad2.values())
            .map(|(&v, &g2)| double_well(v, pot) / eps + 0.5 * eps * g2)
            .collect(),
    };
    Ok(integrate(&ScalarField::from_values(*u.grid(), density)?))
}

/// Whether [`energy`] is a true energy for the model or only a monitor.
pub fn energy_is_monitor_only(kind: ModelKind) -> bool {
    kind == ModelKind::NV
}

/// `-(1/eps) int M(u) |grad w|^2 dx`, never positive.
pub fn dissipation(u: &ScalarField, w: &ScalarField, config: &ModelConfig) -> Result<f64> {
    if u.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    let rp = config.restriction()?;
    let gw = grad_dot_grad(w, w)?;
    let integrand: Vec<f64> = u
        .values()
        .iter()
        .zip(gw.values())
        .map(|(&v, &g)| mobility(v, &config.potential, &rp) * g)
        .collect();
    let total = integrate(&ScalarField::from_values(*u.grid(), integrand)?);
    Ok(-total / config.epsilon)
}

/// Chemical potential of a state, consistent with the time-stepping rows:
/// the variational derivative of the restricted energy for the variational
/// model, `(f'/eps - eps lap u) / G` otherwise.
pub fn chemical_potential(u: &ScalarField, config: &ModelConfig) -> Result<ScalarField> {
    let eps = config.epsilon;
    let pot = &config.potential;
    let rp = config.restriction()?;
    let grid = *u.grid();
    match config.kind {
        ModelKind::V => {
            let g = u.values().iter().map(|&v| energy_restriction(v, &rp)).collect::<Result<Vec<_>>>()?;
            let g = ScalarField::from_values(grid, g)?;
            let div = div_coeff_grad(&g, u)?;
            let grad2 = grad_dot_grad(u, u)?;
            let vals = (0..grid.len())
                .map(|k| {
                    let v = u.values()[k];
                    let dg = match energy_restriction_d1(v, &rp) {
                        Ok(d) => d,
                        Err(_) if double_well(v, pot) == 0.0 && grad2.values()[k] == 0.0 => 0.0,
                        Err(e) => return Err(e),
                    };
                    Ok(g.values()[k] * double_well_d1(v, pot) / eps + dg * double_well(v, pot) / eps
                        - eps * div.values()[k]
                        + 0.5 * eps * dg * grad2.values()[k])
                })
                .collect::<Result<Vec<_>>>()?;
            ScalarField::from_values(grid, vals)
        }
        ModelKind::NV | ModelKind::DCH => {
            let lap = laplacian(u);
            let vals = (0..grid.len())
                .map(|k| {
                    let v = u.values()[k];
                    let big_g = if config.kind == ModelKind::DCH { 1.0 } else { diffusion_restriction(v, &rp) };
                    (double_well_d1(v, pot) / eps - eps * lap.values()[k]) / big_g
                })
                .collect();
            ScalarField::from_values(grid, vals)
        }
    }
}

/// `(max(0, -min u), max(0, max u - 1))`.
pub fn positivity_overshoot(u: &ScalarField) -> (f64, f64) {
    ((-u.min()).max(0.0), (u.max() - 1.0).max(0.0))
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub a_x: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl DiagnosticsRecord {
    /// Evaluates all diagnostics of `(u, w)`; `a_x` is measured when requested
    /// and left empty if the level set cannot be extracted.
    pub fn measure(
        step: usize,
        t: f64,
        u: &ScalarField,
        w: &ScalarField,
        config: &ModelConfig,
        with_ax: bool,
    ) -> Result<Self> {
        let a_x = if with_ax {
            extract_level_set(u, 0.5).ok().map(|ls| measure_ax(&ls.curve))
        } else {
            None
        };
        let rec = DiagnosticsRecord {
            step,
            t,
            mass: integrate(u),
            energy: energy(u, config)?,
            dissipation: dissipation(u, w, config)?,
            u_min: u.min(),
            u_max: u.max(),
            a_x,
            iterations: 0,
            residual: 0.0,
        };
        let finite = [rec.t, rec.mass, rec.energy, rec.dissipation, rec.u_min, rec.u_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("diagnostics at step {step}")));
        }
        Ok(rec)
    }
}

/// Result of contouring: the largest component and how many were found.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub curve: Curve,
    pub components: usize,
}

const NONE: usize = usize::MAX;

/// Marching squares on the lattice of cell centers (no wrap across the
/// periodic boundary). Crossings are linearly interpolated along lattice
/// edges; ambiguous saddles are resolved by the average of the four corners.
/// Returns the longest component, oriented counterclockwise.
pub fn extract_level_set(u: &ScalarField, level: f64) -> Result<LevelSet> {
    let g = *u.grid();
    let (nx, ny) = (g.nx, g.ny);
    let v = |i: usize, j: usize| u.values()[g.index(i, j)];
    // edge ids: horizontal (i,j)-(i+1,j) -> j*nx+i, vertical (i,j)-(i,j+1) -> nx*ny + j*nx+i
    let h_id = |i: usize, j: usize| j * nx + i;
    let v_id = |i: usize, j: usize| nx * ny + j * nx + i;
    let mut points: Vec<Option<Point>> = vec![None; 2 * nx * ny];
    let mut adj: Vec<[usize; 2]> = vec![[NONE; 2]; 2 * nx * ny];
    let crossing = |a: f64, b: f64| (a > level) != (b > level);
    let lerp = |pa: Point, pb: Point, a: f64, b: f64| {
        let t = (level - a) / (b - a);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx && crossing(v(i, j), v(i + 1, j)) {
                points[h_id(i, j)] = Some(lerp(g.center(i, j), g.center(i + 1, j), v(i, j), v(i + 1, j)));
            }
            if j + 1 < ny && crossing(v(i, j), v(i, j + 1)) {
                points[v_id(i, j)] = Some(lerp(g.center(i, j), g.center(i, j + 1), v(i, j), v(i, j + 1)));
            }
        }
    }
    let mut link = |a: usize, b: usize| {
        for (x, y) in [(a, b), (b, a)] {
            let slot = &mut adj[x];
            if slot[0] == NONE {
                slot[0] = y;
            } else {
                slot[1] = y;
            }
        }
    };
    let mut any = false;
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            // bottom, right, top, left
            let edges = [h_id(i, j), v_id(i + 1, j), h_id(i, j + 1), v_id(i, j)];
            let hits: Vec<usize> = edges.iter().copied().filter(|&e| points[e].is_some()).collect();
            match hits.len() {
                0 => {}
                2 => {
                    any = true;
                    link(hits[0], hits[1]);
                }
                4 => {
                    any = true;
                    let center = 0.25 * (v(i, j) + v(i + 1, j) + v(i + 1, j + 1) + v(i, j + 1));
                    let (c00_above, c_above) = (v(i, j) > level, center > level);
                    // keep the corners that agree with the center connected
                    if c00_above == c_above {
                        // isolate corners (i+1,j) and (i,j+1)
                        link(edges[0], edges[1]);
                        link(edges[2], edges[3]);
                    } else {
                        // isolate corners (i,j) and (i+1,j+1)
                        link(edges[0], edges[3]);
                        link(edges[1], edges[2]);
                    }
                }
                _ => unreachable!("a square has an even number of crossings"),
            }
        }
    }
    if !any {
        return Err(Error::NoCrossing(level));
    }

    let mut visited = vec![false; adj.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();
    // open chains first (start at an endpoint), then closed loops
    let starts = (0..adj.len())
        .filter(|&e| points[e].is_some() && adj[e][1] == NONE && adj[e][0] != NONE)
        .chain((0..adj.len()).filter(|&e| points[e].is_some() && adj[e][0] != NONE))
        .collect::<Vec<_>>();
    for start in starts {
        if visited[start] {
            continue;
        }
        let mut chain = vec![start];
        visited[start] = true;
        let (mut prev, mut cur) = (NONE, start);
        loop {
            let next = if adj[cur][0] != prev && adj[cur][0] != NONE && !visited[adj[cur][0]] {
                adj[cur][0]
            } else if adj[cur][1] != NONE && adj[cur][1] != prev && !visited[adj[cur][1]] {
                adj[cur][1]
            } else {
                break;
            };
            visited[next] = true;
            chain.push(next);
            prev = cur;
            cur = next;
        }
        components.push(chain);
    }
    let count = components.len();
    let longest = components
        .into_iter()
        .max_by_key(|c| c.len())
        .ok_or(Error::NoCrossing(level))?;
    let mut pts: Vec<Point> = Vec::with_capacity(longest.len());
    for e in longest {
        let p = points[e].expect("linked edges carry points");
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(LevelSet {
        curve: Curve::new(pts)?,
        components: count,
    })
}

/// Largest horizontal distance from the area centroid.
pub fn measure_ax(curve: &Curve) -> f64 {
    let cx = curve.centroid()[0];
    curve.points().iter().map(|p| (p[0] - cx).abs()).fold(0.0, f64::max)
}

/// `|a - b| / b`, the relative deviation of `a` from the reference `b`.
pub fn delta_metric(ax_diffuse: f64, ax_sharp: f64) -> Result<f64> {
    if ax_sharp == 0.0 || !ax_sharp.is_finite() {
        return Err(Error::DivisionByZero(format!("reference semi-axis {ax_sharp}")));
    }
    Ok((ax_diffuse - ax_sharp).abs() / ax_sharp.abs())
}
