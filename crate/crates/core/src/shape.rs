//! Analytic initial shapes and their signed distance functions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::{Curve, Point};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::model::tanh_profile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    /// Axis-aligned ellipse centered at the origin.
    Ellipse { ax: f64, ay: f64 },
    /// `r(theta) = r0 (1 + a cos 4 theta)` around the origin.
    FourFold { r0: f64, a: f64 },
}

impl Default for Shape {
    fn default() -> Self {
        Shape::Ellipse { ax: 1.0, ay: 0.5 }
    }
}

impl Shape {
    pub fn four_fold_default() -> Self {
        Shape::FourFold { r0: 1.0, a: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Shape::Circle { center, radius } => {
                if !ok(radius) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::validation("shape.radius", format!("must be > 0, got {radius}")));
                }
            }
            Shape::Ellipse { ax, ay } => {
                if !ok(ax) || !ok(ay) {
                    return Err(Error::validation("shape.ax/ay", format!("semi-axes must be > 0, got ({ax}, {ay})")));
                }
            }
            Shape::FourFold { r0, a } => {
                if !ok(r0) {
                    return Err(Error::validation("shape.r0", format!("must be > 0, got {r0}")));
                }
                if !(0.0..1.0).contains(&a) {
                    return Err(Error::validation("shape.a", format!("must lie in [0, 1), got {a}")));
                }
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Circle { radius, .. } => PI * radius * radius,
            Shape::Ellipse { ax, ay } => PI * ax * ay,
            // (1/2) int r^2 dtheta
            Shape::FourFold { r0, a } => PI * r0 * r0 * (1.0 + 0.5 * a * a),
        }
    }

    fn parametric(&self, t: f64) -> Point {
        match *self {
            Shape::Circle { center, radius } => [center[0] + radius * t.cos(), center[1] + radius * t.sin()],
            Shape::Ellipse { ax, ay } => [ax * t.cos(), ay * t.sin()],
            Shape::FourFold { r0, a } => {
                let r = r0 * (1.0 + a * (4.0 * t).cos());
                [r * t.cos(), r * t.sin()]
            }
        }
    }

    /// `n` points spaced uniformly in arc length, counterclockwise, starting
    /// on the positive x axis.
    pub fn boundary_curve(&self, n: usize) -> Result<Curve> {
        self.validate()?;
        let dense_n = 32 * n.max(64);
        let dense: Vec<Point> = (0..dense_n)
            .map(|k| self.parametric(2.0 * PI * k as f64 / dense_n as f64))
            .collect();
        if let Shape::Circle { .. } = self {
            let pts = (0..n).map(|k| self.parametric(2.0 * PI * k as f64 / n as f64)).collect();
            return Curve::new(pts);
        }
        let coarse = Curve::new(dense)?.resample(n)?;
        // one more pass to remove the residual chord/arc mismatch
        Curve::new(coarse.resample(n)?.into_points())
    }

    /// Whether `p` lies strictly inside.
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Circle { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) < radius,
            Shape::Ellipse { ax, ay } => (p[0] / ax).powi(2) + (p[1] / ay).powi(2) < 1.0,
            Shape::FourFold { r0, a } => {
                let theta = p[1].atan2(p[0]);
                p[0].hypot(p[1]) < r0 * (1.0 + a * (4.0 * theta).cos())
            }
        }
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match *self {
            Shape::Circle { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) - radius,
            Shape::Ellipse { ax, ay } => {
                let d = ellipse_distance(ax, ay, p);
                if self.contains(p) {
                    -d
                } else {
                    d
                }
            }
            Shape::FourFold { .. } => {
                let d = self.sampled_distance(p);
                if self.contains(p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Distance by dense parametric sampling followed by golden-section refinement.
    fn sampled_distance(&self, p: Point) -> f64 {
        const SAMPLES: usize = 1024;
        let d2 = |t: f64| {
            let q = self.parametric(t);
            (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
        };
        let dt = 2.0 * PI / SAMPLES as f64;
        let best = (0..SAMPLES)
            .map(|k| k as f64 * dt)
            .min_by(|a, b| d2(*a).total_cmp(&d2(*b)))
            .unwrap();
        let (mut lo, mut hi) = (best - dt, best + dt);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - phi * (hi - lo);
        let mut d = lo + phi * (hi - lo);
        let (mut fc, mut fd) = (d2(c), d2(d));
        while hi - lo > 1e-12 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = d2(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = d2(d);
            }
        }
        d2(0.5 * (lo + hi)).min(d2(best)).sqrt()
    }

    /// Phase field `1/2 (1 - tanh(3 r / eps))` with `r` the signed distance.
    pub fn tanh_field(&self, grid: GridSpec, epsilon: f64) -> Result<ScalarField> {
        self.validate()?;
        if !(epsilon > 0.0) {
            return Err(Error::validation("epsilon", "must be > 0"));
        }
        Ok(ScalarField::from_fn(grid, |x, y| tanh_profile(self.signed_distance([x, y]), epsilon)))
    }
}

/// Unsigned distance from `p` to the ellipse `(x/a)^2 + (y/b)^2 = 1`, via
/// bisection on the closest-point condition (accurate to machine precision).
fn ellipse_distance(a: f64, b: f64, p: Point) -> f64 {
    let (y0, y1) = (p[0].abs(), p[1].abs());
    if a >= b {
        ellipse_distance_sorted(a, b, y0, y1)
    } else {
        ellipse_distance_sorted(b, a, y1, y0)
    }
}

fn ellipse_distance_sorted(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let (z0, z1) = (y0 / e0, y1 / e1);
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = ellipse_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let (numer, denom) = (e0 * y0, e0 * e0 - e1 * e1);
        if numer < denom {
            let xde0 = numer / denom;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let (ra, rb) = (n0 / (s + r0), z1 / (s + 1.0));
        let g = ra * ra + rb * rb - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}
