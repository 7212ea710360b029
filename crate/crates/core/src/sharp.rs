//! Surface diffusion `v = lap_s kappa` on a closed polygon.

use crate::curve::{Curve, Point};
use crate::error::{Error, Result};

/// Signed curvature `1 / circumradius(x_{i-1}, x_i, x_{i+1})`, positive on
/// convex parts of a counterclockwise curve. Collinear triples give 0.
pub fn curvature(curve: &Curve) -> Result<Vec<f64>> {
    let mut out = vec![0.0; curve.len()];
    curvature_into(curve.points(), &mut out)?;
    Ok(out)
}

fn curvature_into(p: &[Point], out: &mut [f64]) -> Result<()> {
    let n = p.len();
    for i in 0..n {
        let (a, b, c) = (p[(i + n - 1) % n], p[i], p[(i + 1) % n]);
        let (d1, d2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - b[0], c[1] - b[1]]);
        let (l1, l2) = (d1[0].hypot(d1[1]), d2[0].hypot(d2[1]));
        let l3 = (c[0] - a[0]).hypot(c[1] - a[1]);
        if l1 == 0.0 || l2 == 0.0 || l3 == 0.0 {
            return Err(Error::InvalidCurve(format!("degenerate point triple at {i}")));
        }
        let cross = d1[0] * d2[1] - d1[1] * d2[0];
        out[i] = 2.0 * cross / (l1 * l2 * l3);
    }
    Ok(())
}

/// Three-point arc-length-weighted second difference of `values` along the curve.
pub fn surface_laplacian(values: &[f64], curve: &Curve) -> Result<Vec<f64>> {
    if values.len() != curve.len() {
        return Err(Error::InvalidCurve(format!(
            "{} values for a curve of {} points",
            values.len(),
            curve.len()
        )));
    }
    let chords = curve.chords();
    let mut out = vec![0.0; curve.len()];
    laplacian_into(values, &chords, &mut out)?;
    Ok(out)
}

fn laplacian_into(v: &[f64], chords: &[f64], out: &mut [f64]) -> Result<()> {
    let n = v.len();
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let (hm, hp) = (chords[prev], chords[i]);
        if hm == 0.0 || hp == 0.0 {
            return Err(Error::InvalidCurve(format!("zero chord next to point {i}")));
        }
        out[i] = 2.0 / (hm + hp) * ((v[(i + 1) % n] - v[i]) / hp - (v[i] - v[prev]) / hm);
    }
    Ok(())
}

/// Outward unit normals from the rotated central chord.
pub fn normals(curve: &Curve) -> Vec<Point> {
    let mut out = vec![[0.0; 2]; curve.len()];
    normals_into(curve.points(), &mut out);
    out
}

fn normals_into(p: &[Point], out: &mut [Point]) {
    let n = p.len();
    for i in 0..n {
        let (a, c) = (p[(i + n - 1) % n], p[(i + 1) % n]);
        let (tx, ty) = (c[0] - a[0], c[1] - a[1]);
        let l = tx.hypot(ty);
        out[i] = [ty / l, -tx / l];
    }
}

/// Reusable buffers for stepping one curve.
struct Workspace {
    /// Chord vectors `x_{i+1} - x_i`, their lengths and reciprocal lengths.
    d: Vec<Point>,
    len: Vec<f64>,
    inv_len: Vec<f64>,
    kappa: Vec<f64>,
    /// Unit central chords `(x_{i+1} - x_{i-1}) / |..|`; the outward normal is their rotation.
    tangent: Vec<Point>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            d: vec![[0.0; 2]; n],
            len: vec![0.0; n],
            inv_len: vec![0.0; n],
            kappa: vec![0.0; n],
            tangent: vec![[0.0; 2]; n],
        }
    }

    /// The arithmetic of `curvature`, `surface_laplacian` and `normals`, fused
    /// over shared chord vectors. Non-finite results surface at the next
    /// [`Workspace::check`].
    fn advance(&mut self, points: &mut [Point], dt: f64) -> Result<()> {
        let n = points.len();
        for i in 0..n {
            let next = if i + 1 == n { 0 } else { i + 1 };
            let d = [points[next][0] - points[i][0], points[next][1] - points[i][1]];
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            self.d[i] = d;
            self.len[i] = l;
            self.inv_len[i] = 1.0 / l;
        }
        for i in 0..n {
            let prev = if i == 0 { n - 1 } else { i - 1 };
            let (d1, d2) = (self.d[prev], self.d[i]);
            let t = [d1[0] + d2[0], d1[1] + d2[1]];
            let inv_l3 = 1.0 / (t[0] * t[0] + t[1] * t[1]).sqrt();
            if !inv_l3.is_finite() || self.len[prev] == 0.0 || self.len[i] == 0.0 {
                return Err(Error::InvalidCurve(format!("degenerate point triple at {i}")));
            }
            self.kappa[i] = 2.0 * (d1[0] * d2[1] - d1[1] * d2[0]) * self.inv_len[prev] * self.inv_len[i] * inv_l3;
            self.tangent[i] = [t[0] * inv_l3, t[1] * inv_l3];
        }
        let k = &self.kappa;
        for i in 0..n {
            let prev = if i == 0 { n - 1 } else { i - 1 };
            let next = if i + 1 == n { 0 } else { i + 1 };
            let v = 2.0 / (self.len[prev] + self.len[i])
                * ((k[next] - k[i]) * self.inv_len[i] - (k[i] - k[prev]) * self.inv_len[prev]);
            let t = self.tangent[i];
            points[i][0] += dt * v * t[1];
            points[i][1] -= dt * v * t[0];
        }
        Ok(())
    }

    fn check(points: &[Point]) -> Result<()> {
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("curve coordinates".into()));
        }
        Ok(())
    }
}

/// One forward Euler step `x_i += dt (lap_s kappa)_i n_i`.
pub fn si_step(curve: &Curve, dt: f64) -> Result<Curve> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("timestep must be positive, got {dt}")));
    }
    let mut points = curve.points().to_vec();
    Workspace::new(points.len()).advance(&mut points, dt)?;
    Workspace::check(&points)?;
    Ok(Curve::from_raw(points))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiOptions {
    /// `dt = dt_factor * (mean spacing)^4`, refreshed after each resample.
    pub dt_factor: f64,
    /// Fixed timestep overriding `dt_factor`.
    pub dt: Option<f64>,
    pub resample_every: usize,
    pub intersection_check_every: usize,
    /// Spacing of observation times; steps are shortened to land on them.
    pub observe_interval: Option<f64>,
}

impl Default for SiOptions {
    fn default() -> Self {
        SiOptions {
            dt_factor: 0.1,
            dt: None,
            resample_every: 10,
            intersection_check_every: 1000,
            observe_interval: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SiOutcome {
    pub curve: Curve,
    pub t: f64,
    pub steps: usize,
}

/// Evolves `curve` to `t_end`. `observe(t, curve)` runs at `t = 0`, at every
/// multiple of `observe_interval` and at `t_end`.
pub fn si_run<F>(curve: &Curve, t_end: f64, opts: &SiOptions, mut observe: F) -> Result<SiOutcome>
where
    F: FnMut(f64, &Curve) -> Result<()>,
{
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!("t_end must be non-negative, got {t_end}")));
    }
    if opts.resample_every == 0 || opts.intersection_check_every == 0 {
        return Err(Error::Domain("resample and check intervals must be positive".into()));
    }
    if let Some(dt) = opts.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("timestep must be positive, got {dt}")));
        }
    }
    if let Some(iv) = opts.observe_interval {
        if !(iv > 0.0 && iv.is_finite()) {
            return Err(Error::Domain(format!("observation interval must be positive, got {iv}")));
        }
    }
    let n = curve.len();
    let mut ws = Workspace::new(n);
    let mut current = curve.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut next_obs = 1usize;
    let dt_for = |c: &Curve| opts.dt.unwrap_or_else(|| opts.dt_factor * c.mean_spacing().powi(4));
    let mut dt = dt_for(&current);
    observe(0.0, &current)?;
    let mut points = current.clone().into_points();
    while t < t_end {
        let mut target = t_end;
        if let Some(iv) = opts.observe_interval {
            target = target.min(next_obs as f64 * iv);
        }
        let mut h = dt;
        let mut hit = false;
        if t + h >= target * (1.0 - 1e-14) {
            h = target - t;
            hit = true;
        }
        ws.advance(&mut points, h)?;
        steps += 1;
        t = if hit { target } else { t + h };
        if steps.is_multiple_of(opts.resample_every) {
            Workspace::check(&points)?;
            current = Curve::from_raw(std::mem::take(&mut points)).resample(n)?;
            dt = dt_for(&current);
            points = current.clone().into_points();
        }
        if steps.is_multiple_of(opts.intersection_check_every) && !Curve::from_raw(points.clone()).is_simple() {
            return Err(Error::SelfIntersection { step: steps, t });
        }
        if hit {
            current = Curve::from_raw(points.clone());
            if let Some(iv) = opts.observe_interval {
                if t >= next_obs as f64 * iv * (1.0 - 1e-14) {
                    next_obs += 1;
                    if t < t_end {
                        observe(t, &current)?;
                    }
                }
            }
        }
    }
    Workspace::check(&points)?;
    current = Curve::from_raw(points);
    if !current.is_simple() {
        return Err(Error::SelfIntersection { step: steps, t });
    }
    observe(t, &current)?;
    Ok(SiOutcome {
        curve: current,
        t,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::Shape;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64) -> Curve {
        Curve::new((0..n).map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            [r * t.cos(), r * t.sin()]
        }).collect())
        .unwrap()
    }

    #[test]
    fn circle_curvature() {
        let k = curvature(&circle(64, 1.0)).unwrap();
        assert!(k.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let k = curvature(&circle(64, 0.5)).unwrap();
        assert!(k.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn collinear_triples_have_zero_curvature() {
        let mut pts = Vec::new();
        for k in 0..4 {
            pts.push([k as f64, 0.0]);
        }
        for k in 0..4 {
            pts.push([4.0, k as f64]);
        }
        for k in 0..4 {
            pts.push([4.0 - k as f64, 4.0]);
        }
        for k in 0..4 {
            pts.push([0.0, 4.0 - k as f64]);
        }
        let k = curvature(&Curve::new(pts).unwrap()).unwrap();
        assert_eq!(k[1], 0.0);
        assert!(k[4] > 0.0);
    }

    #[test]
    fn ellipse_tip_curvature_converges() {
        // analytic curvature at (a, 0) is a / b^2 = 4
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let c = Shape::Ellipse { ax: 1.0, ay: 0.5 }.boundary_curve(n).unwrap();
            let k = curvature(&c).unwrap();
            errs.push((k[0] - 4.0).abs());
        }
        assert!(errs[2] < 0.01, "{errs:?}");
        assert!(errs[1] / errs[2] > 3.0, "second order: {errs:?}");
    }

    #[test]
    fn laplacian_of_constants_and_sums() {
        let c = Shape::Ellipse { ax: 1.0, ay: 0.5 }.boundary_curve(100).unwrap();
        let lap = surface_laplacian(&vec![3.0; 100], &c).unwrap();
        assert!(lap.iter().all(|v| v.abs() < 1e-10));
        let circ = circle(128, 1.0);
        let v: Vec<f64> = (0..128).map(|k| (k as f64 * 0.37).sin() + 0.1 * k as f64 % 3.0).collect();
        let lap = surface_laplacian(&v, &circ).unwrap();
        assert!(lap.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn laplacian_eigenfunction() {
        let n = 256;
        let c = circle(n, 1.0);
        let l = c.perimeter();
        let k = 2.0 * PI / l;
        let v: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
        let lap = surface_laplacian(&v, &c).unwrap();
        // discrete eigenvalue of the 3-point stencil for the given chord
        let h = l / n as f64;
        let discrete = 4.0 / (h * h) * (PI / n as f64).sin().powi(2);
        assert!((discrete / (k * k) - 1.0).abs() < 1e-4);
        for (a, b) in lap.iter().zip(&v) {
            assert!((a + discrete * b).abs() < 1e-9);
        }
    }

    #[test]
    fn fused_step_matches_the_operators() {
        let c = Shape::four_fold_default().boundary_curve(64).unwrap();
        let dt = 1e-6;
        let k = curvature(&c).unwrap();
        let v = surface_laplacian(&k, &c).unwrap();
        let nrm = normals(&c);
        let next = si_step(&c, dt).unwrap();
        for i in 0..c.len() {
            let p = c.points()[i];
            let q = next.points()[i];
            let expect = [p[0] + dt * v[i] * nrm[i][0], p[1] + dt * v[i] * nrm[i][1]];
            assert!((q[0] - expect[0]).abs() < 1e-14 && (q[1] - expect[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn circles_are_stationary() {
        let c = circle(128, 0.8);
        let next = si_step(&c, 1e-3).unwrap();
        for (a, b) in c.points().iter().zip(next.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        let out = si_run(&c, 1e-4, &SiOptions::default(), |_, _| Ok(())).unwrap();
        for (a, b) in c.points().iter().zip(out.curve.points()) {
            assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn outward_normals_on_a_circle() {
        let c = circle(32, 2.0);
        for (p, n) in c.points().iter().zip(normals(&c)) {
            assert!((n[0] - p[0] / 2.0).abs() < 1e-12 && (n[1] - p[1] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_relaxes_and_conserves_area() {
        let c0 = Shape::Ellipse { ax: 1.0, ay: 0.5 }.boundary_curve(64).unwrap();
        let a0 = c0.area();
        let mut samples = Vec::new();
        let opts = SiOptions {
            observe_interval: Some(2e-3),
            ..SiOptions::default()
        };
        let out = si_run(&c0, 0.02, &opts, |t, c| {
            samples.push((t, c.area(), c.points().iter().map(|p| p[0].abs()).fold(0.0, f64::max)));
            Ok(())
        })
        .unwrap();
        assert!((out.t - 0.02).abs() < 1e-15);
        assert_eq!(samples.len(), 11);
        for w in samples.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert!(w[1].2 < w[0].2, "A_x must shrink: {w:?}");
        }
        for s in &samples {
            assert!((s.1 / a0 - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn rejects_invalid_timesteps() {
        let c = circle(16, 1.0);
        assert!(si_step(&c, 0.0).is_err());
        assert!(si_run(&c, -1.0, &SiOptions::default(), |_, _| Ok(())).is_err());
    }
}
