//! Closed polygonal curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A closed, counterclockwise polygon; the last point connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    points: Vec<Point>,
}

pub const MIN_CURVE_POINTS: usize = 8;

impl Curve {
    /// Validates a closed polygon and orients it counterclockwise.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < MIN_CURVE_POINTS {
            return Err(Error::InvalidCurve(format!(
                "need at least {MIN_CURVE_POINTS} points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCurve("non-finite coordinate".into()));
        }
        let n = points.len();
        for i in 0..n {
            if points[i] == points[(i + 1) % n] {
                return Err(Error::InvalidCurve(format!("points {i} and {} coincide", (i + 1) % n)));
            }
        }
        let mut curve = Curve { points };
        if !curve.is_simple() {
            return Err(Error::InvalidCurve("curve self-intersects".into()));
        }
        if curve.signed_area() < 0.0 {
            curve.points.reverse();
        }
        Ok(curve)
    }

    pub(crate) fn from_raw(points: Vec<Point>) -> Self {
        Curve { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shoelace area, positive for counterclockwise curves.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        0.5 * (0..n)
            .map(|i| {
                let [x0, y0] = self.points[i];
                let [x1, y1] = self.points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Chord lengths `|x_{i+1} - x_i|`.
    pub fn chords(&self) -> Vec<f64> {
        let n = self.points.len();
        (0..n).map(|i| dist(self.points[i], self.points[(i + 1) % n])).collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.chords().iter().sum()
    }

    pub fn mean_spacing(&self) -> f64 {
        self.perimeter() / self.points.len() as f64
    }

    /// Centroid of the enclosed region.
    pub fn centroid(&self) -> Point {
        let n = self.points.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let [x0, y0] = self.points[i];
            let [x1, y1] = self.points[(i + 1) % n];
            let c = x0 * y1 - x1 * y0;
            a2 += c;
            cx += (x0 + x1) * c;
            cy += (y0 + y1) * c;
        }
        if a2 == 0.0 {
            let inv = 1.0 / n as f64;
            return [
                self.points.iter().map(|p| p[0]).sum::<f64>() * inv,
                self.points.iter().map(|p| p[1]).sum::<f64>() * inv,
            ];
        }
        [cx / (3.0 * a2), cy / (3.0 * a2)]
    }

    /// Whether no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        let p = &self.points;
        // bounding boxes first; the curves here are small enough for the O(n^2) sweep
        let boxes: Vec<[f64; 4]> = (0..n)
            .map(|i| {
                let (a, b) = (p[i], p[(i + 1) % n]);
                [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])]
            })
            .collect();
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (bi, bj) = (&boxes[i], &boxes[j]);
                if bi[1] < bj[0] || bj[1] < bi[0] || bi[3] < bj[2] || bj[3] < bi[2] {
                    continue;
                }
                if segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// Redistributes `n` points uniformly in arc length along the periodic
    /// cubic spline through the current points, starting at point 0.
    pub fn resample(&self, n: usize) -> Result<Curve> {
        if n < MIN_CURVE_POINTS {
            return Err(Error::InvalidCurve(format!("cannot resample to {n} points")));
        }
        let spline = PeriodicSpline::new(&self.points)?;
        let step = spline.length() / n as f64;
        let mut seg = 0;
        let points = (0..n)
            .map(|k| {
                let s = k as f64 * step;
                while seg + 1 < self.points.len() && spline.knots[seg + 1] <= s {
                    seg += 1;
                }
                spline.eval_in(seg, s)
            })
            .collect();
        Ok(Curve { points })
    }
}

fn dist(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

/// Periodic cubic spline through closed-curve points, parameterized by
/// cumulative chord length.
struct PeriodicSpline {
    knots: Vec<f64>,
    inv_h: Vec<f64>,
    xs: Vec<Point>,
    m: Vec<Point>,
}

impl PeriodicSpline {
    fn new(points: &[Point]) -> Result<Self> {
        let n = points.len();
        let h: Vec<f64> = (0..n).map(|i| dist(points[i], points[(i + 1) % n])).collect();
        if h.contains(&0.0) {
            return Err(Error::InvalidCurve("zero-length chord".into()));
        }
        let mut knots = Vec::with_capacity(n + 1);
        knots.push(0.0);
        for v in &h {
            knots.push(knots.last().unwrap() + v);
        }
        let lower: Vec<f64> = (0..n).map(|i| h[(i + n - 1) % n]).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 * (h[(i + n - 1) % n] + h[i])).collect();
        let system = CyclicTridiagonal::new(&lower, &diag, &h)?;
        let inv_h: Vec<f64> = h.iter().map(|v| 1.0 / v).collect();
        let mut m = vec![[0.0; 2]; n];
        let mut rhs = vec![0.0; n];
        for d in 0..2 {
            for (i, r) in rhs.iter_mut().enumerate() {
                let (prev, next) = (if i == 0 { n - 1 } else { i - 1 }, if i + 1 == n { 0 } else { i + 1 });
                *r = 6.0
                    * ((points[next][d] - points[i][d]) * inv_h[i] - (points[i][d] - points[prev][d]) * inv_h[prev]);
            }
            for (mi, s) in m.iter_mut().zip(system.solve(&rhs)) {
                mi[d] = s;
            }
        }
        Ok(PeriodicSpline {
            knots,
            inv_h,
            xs: points.to_vec(),
            m,
        })
    }

    fn length(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    #[cfg(test)]
    fn eval(&self, s: f64) -> Point {
        let n = self.xs.len();
        let s = s.rem_euclid(self.length());
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i - 1,
        };
        self.eval_in(i, s)
    }

    /// Evaluates on segment `i`, i.e. for `knots[i] <= s <= knots[i + 1]`.
    fn eval_in(&self, i: usize, s: f64) -> Point {
        let n = self.xs.len();
        let j = if i + 1 == n { 0 } else { i + 1 };
        let h = self.knots[i + 1] - self.knots[i];
        let inv_h = self.inv_h[i];
        let (a, b) = (self.knots[i + 1] - s, s - self.knots[i]);
        let (a3, b3) = (a * a * a * inv_h / 6.0, b * b * b * inv_h / 6.0);
        let mut out = [0.0; 2];
        for (d, o) in out.iter_mut().enumerate() {
            let (mi, mj) = (self.m[i][d], self.m[j][d]);
            *o = mi * a3 + mj * b3 + (self.xs[i][d] * inv_h - mi * h / 6.0) * a + (self.xs[j][d] * inv_h - mj * h / 6.0) * b;
        }
        out
    }
}

/// LU factors of a periodic tridiagonal matrix whose row `i` is
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]` (indices mod n); the
/// corner entries are handled with a Sherman-Morrison correction.
struct CyclicTridiagonal {
    lower: Vec<f64>,
    /// Eliminated super-diagonal ratios and reciprocal pivots of the bordered tridiagonal part.
    c: Vec<f64>,
    inv_beta: Vec<f64>,
    gamma: f64,
    corner_low: f64,
    z: Vec<f64>,
    z_fact: f64,
}

impl CyclicTridiagonal {
    fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n < 3 {
            return Err(Error::Domain("cyclic tridiagonal system needs n >= 3".into()));
        }
        let gamma = -diag[0];
        let (corner_up, corner_low) = (upper[n - 1], lower[0]);
        let mut b = diag.to_vec();
        b[0] -= gamma;
        b[n - 1] -= corner_up * corner_low / gamma;
        let mut c = vec![0.0; n];
        let mut beta = vec![0.0; n];
        beta[0] = b[0];
        for i in 1..n {
            c[i] = upper[i - 1] / beta[i - 1];
            beta[i] = b[i] - lower[i] * c[i];
        }
        if beta.iter().any(|&p| p == 0.0 || !p.is_finite()) {
            return Err(Error::Singular("zero pivot in cyclic tridiagonal solve".into()));
        }
        let mut me = CyclicTridiagonal {
            lower: lower.to_vec(),
            c,
            inv_beta: beta.iter().map(|p| 1.0 / p).collect(),
            gamma,
            corner_low,
            z: Vec::new(),
            z_fact: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner_up;
        me.z = me.solve_bordered(&u);
        me.z_fact = 1.0 + me.z[0] + corner_low * me.z[n - 1] / gamma;
        Ok(me)
    }

    fn solve_bordered(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        x[0] = rhs[0] * self.inv_beta[0];
        for i in 1..n {
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) * self.inv_beta[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c[i + 1] * x[i + 1];
        }
        x
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = self.solve_bordered(rhs);
        let fact = (x[0] + self.corner_low * x[n - 1] / self.gamma) / self.z_fact;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
        x
    }
}
