//! Uniform periodic cell-centered grids, scalar fields and the discrete
//! differential operators used by the solvers and diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows handed to one rayon task.
const ROW_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    /// Lower-left corner of the domain.
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 cells per axis, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(GridSpec {
            nx,
            ny,
            lx,
            ly,
            origin,
        })
    }

    /// `n x n` cells on the square `[-l/2, l/2]^2`.
    pub fn centered_square(n: usize, l: f64) -> Result<Self> {
        GridSpec::new(n, n, l, l, [-0.5 * l, -0.5 * l])
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell-center coordinates of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.hx(),
            self.origin[1] + (j as f64 + 0.5) * self.hy(),
        ]
    }

    #[inline]
    pub(crate) fn east(&self, i: usize) -> usize {
        if i + 1 == self.nx {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub(crate) fn west(&self, i: usize) -> usize {
        if i == 0 {
            self.nx - 1
        } else {
            i - 1
        }
    }

    #[inline]
    pub(crate) fn north(&self, j: usize) -> usize {
        if j + 1 == self.ny {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub(crate) fn south(&self, j: usize) -> usize {
        if j == 0 {
            self.ny - 1
        } else {
            j - 1
        }
    }
}

/// Cell-centered samples of a scalar function; row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at index {k}")));
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let mut values = vec![0.0; grid.len()];
        values
            .par_chunks_mut(grid.nx)
            .enumerate()
            .for_each(|(j, row)| {
                for (i, v) in row.iter_mut().enumerate() {
                    let [x, y] = grid.center(i, j);
                    *v = f(x, y);
                }
            });
        ScalarField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Cyclic shift by `(sx, sy)` cells: `out(i + sx, j + sy) = self(i, j)`.
    pub fn shifted(&self, sx: usize, sy: usize) -> ScalarField {
        let g = self.grid;
        let mut out = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                out[g.index((i + sx) % g.nx, (j + sy) % g.ny)] = self.values[g.index(i, j)];
            }
        }
        ScalarField {
            grid: g,
            values: out,
        }
    }

    fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Grid inner product `hx hy sum a b`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.check_same_grid(other)?;
        let g = &self.grid;
        let s = deterministic_sum(self.values.len(), |k| self.values[k] * other.values[k]);
        Ok(s * g.hx() * g.hy())
    }
}

/// Sum of `term(k)` for `k < n` with a fixed reduction order, independent of
/// the thread count.
pub(crate) fn deterministic_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    const CHUNK: usize = 4096;
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(n);
            (c * CHUNK..end).map(&term).sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

/// Applies `cell(i, j)` to every cell in parallel over rows.
fn build<F>(grid: GridSpec, cell: F) -> ScalarField
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut values = vec![0.0; grid.len()];
    values
        .par_chunks_mut(grid.nx * ROW_CHUNK)
        .enumerate()
        .for_each(|(c, rows)| {
            for (r, row) in rows.chunks_mut(grid.nx).enumerate() {
                let j = c * ROW_CHUNK + r;
                for (i, v) in row.iter_mut().enumerate() {
                    *v = cell(i, j);
                }
            }
        });
    ScalarField { grid, values }
}

/// Five-point periodic Laplacian.
pub fn laplacian(field: &ScalarField) -> ScalarField {
    let g = *field.grid();
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    build(g, |i, j| {
        let c = field.at(i, j);
        ((field.at(g.east(i), j) - c) - (c - field.at(g.west(i), j))) * ihx2
            + ((field.at(i, g.north(j)) - c) - (c - field.at(i, g.south(j)))) * ihy2
    })
}

/// `div(c grad f)` in flux form; face coefficients are arithmetic means of the
/// two adjacent cells, so the face fluxes telescope and the output sums to zero.
pub fn div_coeff_grad(coeff: &ScalarField, field: &ScalarField) -> Result<ScalarField> {
    coeff.check_same_grid(field)?;
    let g = *field.grid();
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    Ok(build(g, |i, j| {
        let (e, w, n, s) = (g.east(i), g.west(i), g.north(j), g.south(j));
        let c = coeff.at(i, j);
        let f = field.at(i, j);
        let ce = 0.5 * (c + coeff.at(e, j));
        let cw = 0.5 * (c + coeff.at(w, j));
        let cn = 0.5 * (c + coeff.at(i, n));
        let cs = 0.5 * (c + coeff.at(i, s));
        (ce * (field.at(e, j) - f) - cw * (f - field.at(w, j))) * ihx2
            + (cn * (field.at(i, n) - f) - cs * (f - field.at(i, s))) * ihy2
    }))
}

/// Pointwise `grad a . grad b` with centered differences.
pub fn grad_dot_grad(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    a.check_same_grid(b)?;
    let g = *a.grid();
    let (ihx, ihy) = (0.5 / g.hx(), 0.5 / g.hy());
    Ok(build(g, |i, j| {
        let (e, w, n, s) = (g.east(i), g.west(i), g.north(j), g.south(j));
        let ax = (a.at(e, j) - a.at(w, j)) * ihx;
        let ay = (a.at(i, n) - a.at(i, s)) * ihy;
        let bx = (b.at(e, j) - b.at(w, j)) * ihx;
        let by = (b.at(i, n) - b.at(i, s)) * ihy;
        ax * bx + ay * by
    }))
}

/// `|grad f|^2` per cell as the mean of the squared one-sided differences on
/// the cell's faces. Summed over the grid this is the discrete Dirichlet
/// energy whose variation is exactly the five-point Laplacian.
pub fn face_gradient_sq(field: &ScalarField) -> ScalarField {
    let g = *field.grid();
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    build(g, |i, j| {
        let f = field.at(i, j);
        let de = field.at(g.east(i), j) - f;
        let dw = f - field.at(g.west(i), j);
        let dn = field.at(i, g.north(j)) - f;
        let ds = f - field.at(i, g.south(j));
        0.5 * ((de * de + dw * dw) * ihx2 + (dn * dn + ds * ds) * ihy2)
    })
}

/// Midpoint-rule integral over the periodic domain.
pub fn integrate(field: &ScalarField) -> f64 {
    let g = field.grid();
    deterministic_sum(field.values.len(), |k| field.values[k]) * g.hx() * g.hy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mobility, tanh_profile, PotentialParams, RestrictionParams};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::centered_square(n, 4.0).unwrap()
    }

    fn pseudo_random(grid: GridSpec, seed: u64) -> ScalarField {
        // xorshift; deterministic test data only
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let values = (0..grid.len())
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        ScalarField::from_values(grid, values).unwrap()
    }

    fn circle(grid: GridSpec, radius: f64, eps: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| tanh_profile((x * x + y * y).sqrt() - radius, eps))
    }

    #[test]
    fn rejects_small_grids() {
        assert!(GridSpec::new(4, 16, 1.0, 1.0, [0.0, 0.0]).is_err());
        assert!(GridSpec::new(16, 16, 0.0, 1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let f = ScalarField::constant(grid(16), 3.5);
        assert!(laplacian(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_cosine_eigenfunction() {
        let g = GridSpec::new(256, 16, 4.0, 1.0, [-2.0, 0.0]).unwrap();
        let k = 2.0 * PI / g.lx;
        let f = ScalarField::from_fn(g, |x, _| (k * x).cos());
        let lap = laplacian(&f);
        let h = g.hx();
        let discrete = -(2.0 / (h * h)) * (1.0 - (k * h).cos());
        let mut max_cont = 0.0f64;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let [x, _] = g.center(i, j);
                let exact_disc = discrete * (k * x).cos();
                assert!((lap.at(i, j) - exact_disc).abs() < 1e-9);
                let exact_cont = -k * k * (k * x).cos();
                max_cont = max_cont.max((lap.at(i, j) - exact_cont).abs());
            }
        }
        assert!(max_cont / (k * k) < 1e-3, "relative error {}", max_cont / (k * k));
    }

    #[test]
    fn spike_response_sums_to_zero() {
        let g = grid(16);
        let mut f = ScalarField::zeros(g);
        f.values_mut()[g.index(3, 5)] = 1.0;
        let lap = laplacian(&f);
        let s: f64 = lap.values().iter().sum();
        assert!(s.abs() < 1e-9);
        assert_eq!(lap.at(3, 5), -2.0 / (g.hx() * g.hx()) - 2.0 / (g.hy() * g.hy()));
    }

    #[test]
    fn unit_coefficient_divergence_is_laplacian() {
        let g = grid(32);
        let f = pseudo_random(g, 7);
        let one = ScalarField::constant(g, 1.0);
        assert_eq!(div_coeff_grad(&one, &f).unwrap(), laplacian(&f));
    }

    #[test]
    fn divergence_of_constant_vanishes() {
        let g = grid(32);
        let c = pseudo_random(g, 3).map(|v| v + 1.0);
        let f = ScalarField::constant(g, -2.0);
        assert!(div_coeff_grad(&c, &f).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_telescopes_for_degenerate_mobility() {
        let g = grid(128);
        let u = circle(g, 0.75, 0.2);
        let pot = PotentialParams::default();
        let rp = RestrictionParams::new(1.0, 0.0, 0.2, 6.0).unwrap();
        let m = u.map(|v| mobility(v, &pot, &rp));
        let d = div_coeff_grad(&m, &u).unwrap();
        let max = d.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sum: f64 = d.values().iter().sum();
        assert!(sum.abs() <= 1e-12 * max * g.len() as f64, "sum {sum}, max {max}");
        assert!(sum.abs() <= 1e-12 * max.max(1.0) * 1e2);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = ScalarField::zeros(grid(16));
        let b = ScalarField::zeros(grid(32));
        assert!(matches!(div_coeff_grad(&a, &b), Err(Error::GridMismatch)));
        assert!(matches!(grad_dot_grad(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn gradient_products() {
        let g = grid(32);
        let c = ScalarField::constant(g, 1.0);
        assert!(grad_dot_grad(&c, &c).unwrap().values().iter().all(|&v| v == 0.0));

        let a = ScalarField::from_fn(g, |x, _| (x * 1.3).sin());
        let b = ScalarField::from_fn(g, |_, y| (y * 0.7).cos());
        assert!(grad_dot_grad(&a, &b).unwrap().values().iter().all(|&v| v == 0.0));

        // sawtooth with slope 0.5 in x, wrapping at the domain edge
        let saw = ScalarField::from_fn(g, |x, _| 0.5 * x);
        let gg = grad_dot_grad(&saw, &saw).unwrap();
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                assert!((gg.at(i, j) - 0.25).abs() < 1e-12);
            }
            assert!((gg.at(0, j) - 0.25).abs() > 1.0);
        }
    }

    #[test]
    fn integrate_constants_and_circle() {
        let g = grid(64);
        assert!((integrate(&ScalarField::constant(g, 2.5)) - 40.0).abs() < 1e-12);
        assert_eq!(integrate(&ScalarField::zeros(g)), 0.0);

        let area = integrate(&circle(grid(256), 0.75, 0.2));
        let exact = PI * 0.75 * 0.75;
        assert!(((area - exact) / exact).abs() < 0.02);
        // fine-grid quadrature oracle agrees with the coarse value
        let fine = integrate(&circle(grid(1024), 0.75, 0.2));
        assert!(((area - fine) / fine).abs() < 1e-4);
    }

    #[test]
    fn face_gradient_matches_laplacian_variation() {
        // d/dt E(f + t v) at t = 0 equals -<lap f, v> for E = (1/2) int |grad f|^2
        let g = grid(32);
        let f = pseudo_random(g, 11);
        let v = pseudo_random(g, 12);
        let energy = |t: f64| {
            let ft = ScalarField::from_values(
                g,
                f.values().iter().zip(v.values()).map(|(a, b)| a + t * b).collect(),
            )
            .unwrap();
            0.5 * integrate(&face_gradient_sq(&ft))
        };
        let dt = 1e-4;
        let numeric = (energy(dt) - energy(-dt)) / (2.0 * dt);
        let exact = -laplacian(&f).inner(&v).unwrap();
        assert!((numeric - exact).abs() < 1e-8 * exact.abs().max(1.0));
    }

    #[test]
    fn operators_are_self_adjoint() {
        let g = grid(32);
        let c = pseudo_random(g, 21).map(|v| v + 0.6);
        let a = pseudo_random(g, 22);
        let b = pseudo_random(g, 23);
        let lhs = laplacian(&a).inner(&b).unwrap();
        let rhs = a.inner(&laplacian(&b)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        let lhs = div_coeff_grad(&c, &a).unwrap().inner(&b).unwrap();
        let rhs = a.inner(&div_coeff_grad(&c, &b).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn operators_commute_with_shifts(seed in 1u64..1000, sx in 0usize..16, sy in 0usize..16) {
            let g = GridSpec::new(16, 12, 2.0, 1.5, [0.0, 0.0]).unwrap();
            let f = pseudo_random(g, seed);
            let c = pseudo_random(g, seed + 1).map(|v| v.abs());
            let (sx, sy) = (sx % g.nx, sy % g.ny);
            prop_assert_eq!(laplacian(&f.shifted(sx, sy)), laplacian(&f).shifted(sx, sy));
            prop_assert_eq!(
                div_coeff_grad(&c.shifted(sx, sy), &f.shifted(sx, sy)).unwrap(),
                div_coeff_grad(&c, &f).unwrap().shifted(sx, sy)
            );
            prop_assert_eq!(
                grad_dot_grad(&c.shifted(sx, sy), &f.shifted(sx, sy)).unwrap(),
                grad_dot_grad(&c, &f).unwrap().shifted(sx, sy)
            );
        }

        #[test]
        fn divergence_is_conservative(seed in 1u64..1000) {
            let g = GridSpec::new(24, 20, 3.0, 2.0, [-1.0, -1.0]).unwrap();
            let c = pseudo_random(g, seed).map(|v| v.abs() * 3.0);
            let f = pseudo_random(g, seed + 17);
            let d = div_coeff_grad(&c, &f).unwrap();
            let max = d.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(integrate(&d).abs() <= 1e-12 * (g.len() as f64) * max * g.hx() * g.hy());
        }
    }
}
