//! Compressed sparse row matrices and preconditioned Krylov solvers for the
//! nonsymmetric coupled systems produced by the IMEX step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::deterministic_sum;

const PAR_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Row-by-row CSR assembly. Duplicate column entries within a row are summed.
#[derive(Debug)]
pub struct CsrBuilder {
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    scratch: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(ncols: usize, nnz_hint: usize) -> Self {
        CsrBuilder {
            ncols,
            row_ptr: vec![0],
            col_idx: Vec::with_capacity(nnz_hint),
            values: Vec::with_capacity(nnz_hint),
            scratch: Vec::with_capacity(16),
        }
    }

    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        self.scratch.clear();
        self.scratch.extend(entries);
        self.scratch.sort_unstable_by_key(|e| e.0);
        let mut last = None;
        for &(c, v) in &self.scratch {
            debug_assert!(c < self.ncols);
            if last == Some(c) {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.col_idx.push(c);
                self.values.push(v);
                last = Some(c);
            }
        }
        self.row_ptr.push(self.col_idx.len());
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix {
            nrows: self.row_ptr.len() - 1,
            ncols: self.ncols,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        let mut b = CsrBuilder::new(n, n);
        for i in 0..n {
            b.push_row([(i, 1.0)]);
        }
        b.finish()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&mut self, scale: &[f64]) {
        assert_eq!(scale.len(), self.nrows, "one scale factor per row");
        for (i, &s) in scale.iter().enumerate() {
            for v in &mut self.values[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.par_chunks_mut(PAR_ROWS).enumerate().for_each(|(c, out)| {
            let start = c * PAR_ROWS;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = start + k;
                let (cols, vals) = self.row(i);
                *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
            }
        });
    }

    /// `y = b - A x`.
    pub fn residual(&self, b: &[f64], x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y);
        y.par_iter_mut().zip(b.par_iter()).for_each(|(yi, bi)| *yi = bi - *yi);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovMethod {
    Gmres,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    None,
    /// Inverse of the matrix diagonal.
    Jacobi,
    /// Inverse of the 2x2 blocks coupling row `k` with row `k + n/2`
    /// (the two unknowns living on one grid cell).
    CellBlockJacobi,
    /// Incomplete LU with zero fill. Even-sized systems are factored with
    /// rows `k` and `k + n/2` interleaved so each cell's unknowns are adjacent.
    Ilu0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: KrylovMethod,
    pub preconditioner: PreconditionerKind,
    /// Krylov subspace dimension between GMRES restarts.
    pub restart: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iter: 2000,
            method: KrylovMethod::Bicgstab,
            preconditioner: PreconditionerKind::Ilu0,
            restart: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual `|b - A x| / |b|`.
    pub residual: f64,
}

enum Preconditioner {
    Identity,
    Diagonal(Vec<f64>),
    /// Row-major inverse blocks `[a, b, c, d]` for each pair `(k, k + half)`.
    Blocks { half: usize, inv: Vec<[f64; 4]> },
    Ilu(Box<Ilu0>),
}

/// Zero-fill incomplete LU factors stored in one CSR pattern: strictly lower
/// entries hold `L` (unit diagonal implied), the rest hold `U`.
struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    work: std::sync::Mutex<Vec<f64>>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let perm: Vec<usize> = if n.is_multiple_of(2) {
            let half = n / 2;
            (0..n).map(|i| if i % 2 == 0 { i / 2 } else { half + i / 2 }).collect()
        } else {
            (0..n).collect()
        };
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut b = CsrBuilder::new(n, a.nnz());
        for &old in &perm {
            let (cols, vals) = a.row(old);
            b.push_row(cols.iter().zip(vals).map(|(&c, &v)| (inv[c], v)));
        }
        let mut lu = b.finish();
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.col_idx[k] == i {
                    *d = k;
                }
            }
            if *d == usize::MAX {
                return Err(Error::Singular(format!("ILU(0): missing diagonal in row {}", perm[i])));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col_idx[k]] = k;
            }
            for k in start..diag[i] {
                let col = lu.col_idx[k];
                let pivot = lu.values[diag[col]];
                let factor = lu.values[k] / pivot;
                lu.values[k] = factor;
                for m in diag[col] + 1..lu.row_ptr[col + 1] {
                    let target = pos[lu.col_idx[m]];
                    if target != usize::MAX {
                        lu.values[target] -= factor * lu.values[m];
                    }
                }
            }
            for k in start..end {
                pos[lu.col_idx[k]] = usize::MAX;
            }
            let d = lu.values[diag[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular(format!("ILU(0): zero pivot in row {}", perm[i])));
            }
        }
        Ok(Ilu0 {
            lu,
            diag,
            perm,
            work: std::sync::Mutex::new(vec![0.0; n]),
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut y = self.work.lock().unwrap_or_else(|e| e.into_inner());
        let (ptr, col, val) = (&self.lu.row_ptr, &self.lu.col_idx, &self.lu.values);
        for i in 0..y.len() {
            let mut acc = r[self.perm[i]];
            for k in ptr[i]..self.diag[i] {
                acc -= val[k] * y[col[k]];
            }
            y[i] = acc;
        }
        for i in (0..y.len()).rev() {
            let mut acc = y[i];
            for k in self.diag[i] + 1..ptr[i + 1] {
                acc -= val[k] * y[col[k]];
            }
            y[i] = acc / val[self.diag[i]];
        }
        for (i, &old) in self.perm.iter().enumerate() {
            z[old] = y[i];
        }
    }
}

impl Preconditioner {
    fn build(a: &CsrMatrix, kind: PreconditionerKind) -> Result<Self> {
        match kind {
            PreconditionerKind::None => Ok(Preconditioner::Identity),
            PreconditionerKind::Jacobi => {
                let inv = (0..a.nrows)
                    .map(|i| {
                        let d = a.get(i, i);
                        if d != 0.0 && d.is_finite() {
                            Ok(1.0 / d)
                        } else {
                            Err(Error::Singular(format!("zero diagonal in row {i}")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Preconditioner::Diagonal(inv))
            }
            PreconditionerKind::CellBlockJacobi => {
                if !a.nrows.is_multiple_of(2) {
                    return Err(Error::Domain(
                        "cell-block preconditioner needs an even number of rows".into(),
                    ));
                }
                let half = a.nrows / 2;
                let inv = (0..half)
                    .map(|k| {
                        let (p, q) = (k, k + half);
                        let (m00, m01, m10, m11) = (a.get(p, p), a.get(p, q), a.get(q, p), a.get(q, q));
                        let det = m00 * m11 - m01 * m10;
                        let scale = (m00 * m11).abs().max((m01 * m10).abs());
                        if det.is_finite() && det.abs() > 1e-14 * scale && scale > 0.0 {
                            Ok([m11 / det, -m01 / det, -m10 / det, m00 / det])
                        } else {
                            Err(Error::Singular(format!("singular 2x2 cell block at cell {k}")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Preconditioner::Blocks { half, inv })
            }
            PreconditionerKind::Ilu0 => Ok(Preconditioner::Ilu(Box::new(Ilu0::new(a)?))),
        }
    }

    /// `z = P^{-1} r`.
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Diagonal(inv) => {
                z.par_iter_mut()
                    .zip(r.par_iter().zip(inv.par_iter()))
                    .for_each(|(zi, (ri, di))| *zi = ri * di);
            }
            Preconditioner::Blocks { half, inv } => {
                let (z0, z1) = z.split_at_mut(*half);
                let (r0, r1) = r.split_at(*half);
                z0.par_iter_mut()
                    .zip(z1.par_iter_mut())
                    .enumerate()
                    .for_each(|(k, (a, b))| {
                        let m = &inv[k];
                        *a = m[0] * r0[k] + m[1] * r1[k];
                        *b = m[2] * r0[k] + m[3] * r1[k];
                    });
            }
            Preconditioner::Ilu(ilu) => ilu.apply(r, z),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    deterministic_sum(a.len(), |k| a[k] * b[k])
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`.
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Solves `A x = b` to `|b - A x| <= tol |b|`.
pub fn solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolveOptions) -> Result<SolveOutcome> {
    if a.nrows != a.ncols || b.len() != a.nrows {
        return Err(Error::Domain(format!(
            "system shape mismatch: {}x{} matrix, rhs of length {}",
            a.nrows,
            a.ncols,
            b.len()
        )));
    }
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system entries".into()));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(SolveOutcome {
            x: vec![0.0; a.nrows],
            iterations: 0,
            residual: 0.0,
        });
    }
    let precond = Preconditioner::build(a, opts.preconditioner)?;
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; a.nrows],
    };
    let iterations = match opts.method {
        KrylovMethod::Gmres => gmres(a, b, &mut x, &precond, bnorm, opts)?,
        KrylovMethod::Bicgstab => bicgstab(a, b, &mut x, &precond, bnorm, opts)?,
    };
    let mut r = vec![0.0; a.nrows];
    a.residual(b, &x, &mut r);
    let residual = norm(&r) / bnorm;
    if !residual.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("solution after {iterations} iterations")));
    }
    if residual > opts.tol {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }
    Ok(SolveOutcome {
        x,
        iterations,
        residual,
    })
}

/// Right-preconditioned restarted GMRES; returns the number of inner iterations.
fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &Preconditioner,
    bnorm: f64,
    opts: &SolveOptions,
) -> Result<usize> {
    let n = a.nrows;
    let m = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
    let mut g = vec![0.0; m + 1];
    let mut total = 0;

    loop {
        a.residual(b, x, &mut r);
        let beta = norm(&r);
        if beta <= opts.tol * bnorm || total >= opts.max_iter {
            return Ok(total);
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if total >= opts.max_iter {
                break;
            }
            total += 1;
            precond.apply(&basis[k], &mut z);
            a.mul_vec(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][k] = h;
                axpy(-h, v, &mut w);
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= 0.5 * opts.tol * bnorm || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        if k_used == 0 {
            return Ok(total);
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut update);
        }
        precond.apply(&update, &mut z);
        axpy(1.0, &z, x);
    }
}

/// Right-preconditioned BiCGStab, restarted from the current iterate on breakdown.
fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &Preconditioner,
    bnorm: f64,
    opts: &SolveOptions,
) -> Result<usize> {
    let n = a.nrows;
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut total = 0;
    let mut restarts = 0;

    'outer: loop {
        a.residual(b, x, &mut r);
        if norm(&r) <= opts.tol * bnorm || total >= opts.max_iter {
            return Ok(total);
        }
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        while total < opts.max_iter {
            total += 1;
            let rho_new = dot(&r0, &r);
            if rho_new == 0.0 || omega == 0.0 {
                restarts += 1;
                if restarts > 50 {
                    return Ok(total);
                }
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p.par_iter_mut()
                .zip(r.par_iter().zip(v.par_iter()))
                .for_each(|(pi, (ri, vi))| *pi = ri + beta * (*pi - omega * vi));
            precond.apply(&p, &mut phat);
            a.mul_vec(&phat, &mut v);
            let r0v = dot(&r0, &v);
            if r0v == 0.0 {
                restarts += 1;
                continue 'outer;
            }
            alpha = rho / r0v;
            s.par_iter_mut()
                .zip(r.par_iter().zip(v.par_iter()))
                .for_each(|(si, (ri, vi))| *si = ri - alpha * vi);
            if norm(&s) <= 0.5 * opts.tol * bnorm {
                axpy(alpha, &phat, x);
                continue 'outer;
            }
            precond.apply(&s, &mut shat);
            a.mul_vec(&shat, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            axpy(alpha, &phat, x);
            axpy(omega, &shat, x);
            r.par_iter_mut()
                .zip(s.par_iter().zip(t.par_iter()))
                .for_each(|(ri, (si, ti))| *ri = si - omega * ti);
            if norm(&r) <= 0.5 * opts.tol * bnorm {
                continue 'outer;
            }
        }
        return Ok(total);
    }
}
