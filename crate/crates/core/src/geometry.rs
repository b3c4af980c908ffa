//! Analytic obstacle boundaries, open observation arcs, planar regions and
//! their quadrature grids.
//!
//! Orientation: closed curves run counter-clockwise and carry the normal
//! `ν = (x₂′, −x₁′)/|x′|`, which points out of the obstacle into the exterior.
//! Arcs use the same formula relative to their own direction of traversal.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::Point;

/// Shape parameter of the kite profile `(cos t + A cos 2t − A, 1.5 sin t)`.
pub const KITE_A: f64 = 0.65;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Circle,
    Ellipse,
    Kite,
}

/// Analytic, 2π-periodic, counter-clockwise closed curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedCurve {
    kind: CurveKind,
    center: Point,
    /// Circle: `[r, r]`; ellipse: semi-axes `[a, b]`; kite: `[scale, scale]`.
    size: [f64; 2],
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Builds a curve from a kind and its parameter list:
/// circle `[r]` or `[r, cx, cy]`; ellipse `[a, b]` or `[a, b, cx, cy]`;
/// kite `[scale]` or `[scale, cx, cy]`.
pub fn make_curve(kind: CurveKind, params: &[f64]) -> Result<ClosedCurve> {
    let (n_shape, bad) = match kind {
        CurveKind::Circle | CurveKind::Kite => (1, params.len() != 1 && params.len() != 3),
        CurveKind::Ellipse => (2, params.len() != 2 && params.len() != 4),
    };
    if bad {
        return Err(Error::Domain(format!("{kind:?} takes {n_shape} shape parameter(s) plus an optional center")));
    }
    let center = if params.len() > n_shape { [params[n_shape], params[n_shape + 1]] } else { [0.0, 0.0] };
    match kind {
        CurveKind::Circle => ClosedCurve::circle(center, params[0]),
        CurveKind::Ellipse => ClosedCurve::ellipse(center, params[0], params[1]),
        CurveKind::Kite => ClosedCurve::kite(center, params[0]),
    }
}

impl ClosedCurve {
    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        positive("circle radius", radius)?;
        Ok(ClosedCurve { kind: CurveKind::Circle, center, size: [radius, radius] })
    }

    pub fn ellipse(center: Point, a: f64, b: f64) -> Result<Self> {
        positive("ellipse semi-axis", a)?;
        positive("ellipse semi-axis", b)?;
        Ok(ClosedCurve { kind: CurveKind::Ellipse, center, size: [a, b] })
    }

    pub fn kite(center: Point, scale: f64) -> Result<Self> {
        positive("kite scale", scale)?;
        Ok(ClosedCurve { kind: CurveKind::Kite, center, size: [scale, scale] })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn center(&self) -> Point {
        self.center
    }

    /// Radius when the curve is a circle.
    pub fn circle_radius(&self) -> Option<f64> {
        (self.kind == CurveKind::Circle).then_some(self.size[0])
    }

    /// `x(t)`, `x′(t)`, `x″(t)`.
    pub fn eval(&self, t: f64) -> (Point, Point, Point) {
        let (c, s) = (t.cos(), t.sin());
        let [p, q] = self.size;
        let (x, d1, d2) = match self.kind {
            CurveKind::Circle | CurveKind::Ellipse => ([p * c, q * s], [-p * s, q * c], [-p * c, -q * s]),
            CurveKind::Kite => {
                let (c2, s2) = ((2.0 * t).cos(), (2.0 * t).sin());
                (
                    [p * (c + KITE_A * c2 - KITE_A), p * 1.5 * s],
                    [p * (-s - 2.0 * KITE_A * s2), p * 1.5 * c],
                    [p * (-c - 4.0 * KITE_A * c2), -p * 1.5 * s],
                )
            }
        };
        ([x[0] + self.center[0], x[1] + self.center[1]], d1, d2)
    }

    pub fn position(&self, t: f64) -> Point {
        self.eval(t).0
    }

    /// Outward unit normal.
    pub fn normal(&self, t: f64) -> Point {
        let (_, d, _) = self.eval(t);
        let s = d[0].hypot(d[1]);
        [d[1] / s, -d[0] / s]
    }

    /// Signed curvature (positive on convex parts).
    pub fn curvature(&self, t: f64) -> f64 {
        let (_, d, dd) = self.eval(t);
        let s = d[0].hypot(d[1]);
        (d[0] * dd[1] - d[1] * dd[0]) / (s * s * s)
    }

    /// Winding-number test against a fine polygon.
    pub fn contains(&self, p: Point) -> bool {
        let n = 2048;
        let mut wind = 0.0;
        let mut prev = self.position(0.0);
        for j in 1..=n {
            let cur = self.position(2.0 * PI * j as f64 / n as f64);
            let a = (prev[1] - p[1]).atan2(prev[0] - p[0]);
            let b = (cur[1] - p[1]).atan2(cur[0] - p[0]);
            let mut d = b - a;
            if d > PI {
                d -= 2.0 * PI;
            } else if d < -PI {
                d += 2.0 * PI;
            }
            wind += d;
            prev = cur;
        }
        wind.abs() > PI
    }

    /// Points sampled uniformly in the parameter.
    pub fn samples(&self, n: usize) -> Vec<Point> {
        (0..n).map(|j| self.position(2.0 * PI * j as f64 / n as f64)).collect()
    }
}

/// Equispaced Nyström grid on a closed curve.
#[derive(Clone, Debug)]
pub struct ClosedCurveGrid {
    pub curve: ClosedCurve,
    pub t: Vec<f64>,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    /// `|x′(t_j)|`.
    pub speed: Vec<f64>,
    /// `x″(t_j)`.
    pub second: Vec<Point>,
    /// Trapezoid weights in arc length, `2π/N · |x′(t_j)|`.
    pub weights: Vec<f64>,
}

/// Grid with `n` (even, ≥ 8) nodes `t_j = 2πj/n`.
pub fn curve_grid(curve: &ClosedCurve, n: usize) -> Result<ClosedCurveGrid> {
    if n < 8 || !n.is_multiple_of(2) {
        return Err(Error::Domain(format!("closed-curve grid needs an even N >= 8, got {n}")));
    }
    let h = 2.0 * PI / n as f64;
    let mut g = ClosedCurveGrid {
        curve: curve.clone(),
        t: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
        second: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
    };
    for j in 0..n {
        let t = h * j as f64;
        let (x, d, dd) = curve.eval(t);
        let s = d[0].hypot(d[1]);
        g.t.push(t);
        g.points.push(x);
        g.normals.push([d[1] / s, -d[0] / s]);
        g.speed.push(s);
        g.second.push(dd);
        g.weights.push(h * s);
    }
    Ok(g)
}

impl ClosedCurveGrid {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Largest arc-length spacing between neighbouring nodes.
    pub fn spacing(&self) -> f64 {
        let h = 2.0 * PI / self.len() as f64;
        self.speed.iter().cloned().fold(0.0, f64::max) * h
    }

    /// The same curve with `factor` times as many nodes; node `factor·j`
    /// coincides with node `j`.
    pub fn refined(&self, factor: usize) -> ClosedCurveGrid {
        curve_grid(&self.curve, self.len() * factor.max(1)).expect("refinement of a valid grid")
    }

    /// Minimum distance from `p` to the curve, via node scan plus a local
    /// Newton refinement in the parameter.
    pub fn distance_to(&self, p: Point) -> f64 {
        let (j, _) = self
            .points
            .iter()
            .enumerate()
            .map(|(j, q)| (j, dist(*q, p)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let mut t = self.t[j];
        for _ in 0..30 {
            let (x, d, dd) = self.curve.eval(t);
            let r = [x[0] - p[0], x[1] - p[1]];
            let g = r[0] * d[0] + r[1] * d[1];
            let gp = d[0] * d[0] + d[1] * d[1] + r[0] * dd[0] + r[1] * dd[1];
            if gp <= 0.0 {
                break;
            }
            let step = (g / gp).clamp(-0.2, 0.2);
            t -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        dist(self.curve.position(t), p).min(dist(self.points[j], p))
    }
}

/// Smooth open arc `y(s)`, `s ∈ [−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum OpenArc {
    Segment { start: Point, end: Point, flip: bool },
    Circular { center: Point, radius: f64, theta0: f64, theta1: f64, flip: bool },
}

impl OpenArc {
    pub fn segment(start: Point, end: Point) -> Result<Self> {
        if dist(start, end) <= 0.0 {
            return Err(Error::Domain("segment endpoints coincide".into()));
        }
        Ok(OpenArc::Segment { start, end, flip: false })
    }

    /// Arc of the circle `center + radius (cos θ, sin θ)`, `θ` from `theta0` to `theta1`.
    pub fn circular(center: Point, radius: f64, theta0: f64, theta1: f64) -> Result<Self> {
        positive("arc radius", radius)?;
        let span = (theta1 - theta0).abs();
        if !(span > 0.0 && span < 2.0 * PI) {
            return Err(Error::Domain(format!("circular arc needs 0 < |θ1 − θ0| < 2π, got {span}")));
        }
        Ok(OpenArc::Circular { center, radius, theta0, theta1, flip: false })
    }

    /// Same arc with the opposite normal family.
    pub fn flipped(&self) -> Self {
        let mut a = self.clone();
        match &mut a {
            OpenArc::Segment { flip, .. } | OpenArc::Circular { flip, .. } => *flip = !*flip,
        }
        a
    }

    /// `y(s)`, `y′(s)`.
    pub fn eval(&self, s: f64) -> (Point, Point) {
        match *self {
            OpenArc::Segment { start, end, .. } => {
                let m = [(start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0];
                let d = [(end[0] - start[0]) / 2.0, (end[1] - start[1]) / 2.0];
                ([m[0] + s * d[0], m[1] + s * d[1]], d)
            }
            OpenArc::Circular { center, radius, theta0, theta1, .. } => {
                let half = (theta1 - theta0) / 2.0;
                let th = theta0 + (s + 1.0) * half;
                (
                    [center[0] + radius * th.cos(), center[1] + radius * th.sin()],
                    [-radius * half * th.sin(), radius * half * th.cos()],
                )
            }
        }
    }

    pub fn position(&self, s: f64) -> Point {
        self.eval(s).0
    }

    pub fn normal(&self, s: f64) -> Point {
        let (_, d) = self.eval(s);
        let n = d[0].hypot(d[1]);
        let flip = match self {
            OpenArc::Segment { flip, .. } | OpenArc::Circular { flip, .. } => *flip,
        };
        let sg = if flip { -1.0 } else { 1.0 };
        [sg * d[1] / n, -sg * d[0] / n]
    }

    pub fn endpoints(&self) -> (Point, Point) {
        (self.position(-1.0), self.position(1.0))
    }

    /// Samples including the endpoints (the closure of the arc).
    pub fn samples(&self, n: usize) -> Vec<Point> {
        (0..n).map(|j| self.position(-1.0 + 2.0 * j as f64 / (n - 1) as f64)).collect()
    }
}

/// Gauss–Legendre grid on an open arc.
#[derive(Clone, Debug)]
pub struct OpenArcGrid {
    pub arc: OpenArc,
    pub s: Vec<f64>,
    /// Plain Gauss–Legendre weights on `[−1, 1]`.
    pub gl_weights: Vec<f64>,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub speed: Vec<f64>,
    /// Arc-length weights `w_j |y′(s_j)|`.
    pub weights: Vec<f64>,
}

pub fn arc_grid(arc: &OpenArc, m: usize) -> Result<OpenArcGrid> {
    if m < 4 {
        return Err(Error::Domain(format!("arc grid needs M >= 4 nodes, got {m}")));
    }
    let (s, w) = gauss_legendre(m);
    let mut g = OpenArcGrid {
        arc: arc.clone(),
        s: s.clone(),
        gl_weights: w.clone(),
        points: Vec::with_capacity(m),
        normals: Vec::with_capacity(m),
        speed: Vec::with_capacity(m),
        weights: Vec::with_capacity(m),
    };
    for j in 0..m {
        let (x, d) = arc.eval(s[j]);
        let sp = d[0].hypot(d[1]);
        g.points.push(x);
        g.normals.push(arc.normal(s[j]));
        g.speed.push(sp);
        g.weights.push(w[j] * sp);
    }
    Ok(g)
}

impl OpenArcGrid {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Planar region supporting forcing, functional weights or observations.
#[derive(Clone, Debug, PartialEq)]
pub enum RegionShape {
    Disk { center: Point, radius: f64 },
    Rectangle { min: Point, max: Point },
    /// Polar sector `r0 ≤ r ≤ r1`, `θ0 ≤ θ ≤ θ1` about the origin.
    Sector { r0: f64, r1: f64, theta0: f64, theta1: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec {
    pub shape: RegionShape,
    /// Gauss nodes per tensor direction.
    pub order: usize,
}

impl RegionSpec {
    pub fn new(shape: RegionShape, order: usize) -> Result<Self> {
        match &shape {
            RegionShape::Disk { radius, .. } => positive("region radius", *radius)?,
            RegionShape::Rectangle { min, max } => {
                positive("rectangle width", max[0] - min[0])?;
                positive("rectangle height", max[1] - min[1])?;
            }
            RegionShape::Sector { r0, r1, theta0, theta1 } => {
                positive("sector inner radius", *r0)?;
                positive("sector radial extent", r1 - r0)?;
                positive("sector angular extent", theta1 - theta0)?;
                if theta1 - theta0 >= 2.0 * PI {
                    return Err(Error::Domain("sector angular extent must be below 2π".into()));
                }
            }
        }
        if order < 2 {
            return Err(Error::Domain("region quadrature order must be at least 2".into()));
        }
        Ok(RegionSpec { shape, order })
    }

    pub fn disk(center: Point, radius: f64, order: usize) -> Result<Self> {
        Self::new(RegionShape::Disk { center, radius }, order)
    }

    pub fn rectangle(min: Point, max: Point, order: usize) -> Result<Self> {
        Self::new(RegionShape::Rectangle { min, max }, order)
    }

    pub fn sector(r0: f64, r1: f64, theta0: f64, theta1: f64, order: usize) -> Result<Self> {
        Self::new(RegionShape::Sector { r0, r1, theta0, theta1 }, order)
    }

    pub fn contains(&self, p: Point) -> bool {
        match self.shape {
            RegionShape::Disk { center, radius } => dist(center, p) <= radius,
            RegionShape::Rectangle { min, max } => p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1],
            RegionShape::Sector { r0, r1, theta0, theta1 } => {
                let r = p[0].hypot(p[1]);
                r >= r0 && r <= r1 && angle_in(p[1].atan2(p[0]), theta0, theta1)
            }
        }
    }

    /// Tensor Gauss quadrature: nodes and area weights.
    pub fn quadrature(&self) -> (Vec<Point>, Vec<f64>) {
        let (x, w) = gauss_legendre(self.order);
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        match self.shape {
            RegionShape::Disk { center, radius } => {
                // Radial Gauss in r with Jacobian r, trapezoid in θ.
                let na = 2 * self.order;
                for (xi, wi) in x.iter().zip(&w) {
                    let r = radius * (xi + 1.0) / 2.0;
                    for a in 0..na {
                        let th = 2.0 * PI * a as f64 / na as f64;
                        pts.push([center[0] + r * th.cos(), center[1] + r * th.sin()]);
                        wts.push(wi * radius / 2.0 * r * 2.0 * PI / na as f64);
                    }
                }
            }
            RegionShape::Rectangle { min, max } => {
                let (hx, hy) = ((max[0] - min[0]) / 2.0, (max[1] - min[1]) / 2.0);
                for (xi, wi) in x.iter().zip(&w) {
                    for (yj, wj) in x.iter().zip(&w) {
                        pts.push([min[0] + hx * (xi + 1.0), min[1] + hy * (yj + 1.0)]);
                        wts.push(wi * wj * hx * hy);
                    }
                }
            }
            RegionShape::Sector { r0, r1, theta0, theta1 } => {
                let (hr, ht) = ((r1 - r0) / 2.0, (theta1 - theta0) / 2.0);
                for (xi, wi) in x.iter().zip(&w) {
                    let r = r0 + hr * (xi + 1.0);
                    for (yj, wj) in x.iter().zip(&w) {
                        let th = theta0 + ht * (yj + 1.0);
                        pts.push([r * th.cos(), r * th.sin()]);
                        wts.push(wi * wj * hr * ht * r);
                    }
                }
            }
        }
        (pts, wts)
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            RegionShape::Disk { radius, .. } => PI * radius * radius,
            RegionShape::Rectangle { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            RegionShape::Sector { r0, r1, theta0, theta1 } => 0.5 * (r1 * r1 - r0 * r0) * (theta1 - theta0),
        }
    }

    /// Points on the region boundary.
    pub fn boundary_samples(&self, n: usize) -> Vec<Point> {
        let n = n.max(16);
        match self.shape {
            RegionShape::Disk { center, radius } => (0..n)
                .map(|j| {
                    let th = 2.0 * PI * j as f64 / n as f64;
                    [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                })
                .collect(),
            RegionShape::Rectangle { min, max } => {
                let corners = [min, [max[0], min[1]], max, [min[0], max[1]]];
                let per = n / 4;
                let mut out = Vec::with_capacity(4 * per);
                for e in 0..4 {
                    let (a, b) = (corners[e], corners[(e + 1) % 4]);
                    for j in 0..per {
                        let s = j as f64 / per as f64;
                        out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                    }
                }
                out
            }
            RegionShape::Sector { r0, r1, theta0, theta1 } => {
                let per = n / 4;
                let mut out = Vec::with_capacity(4 * per);
                for j in 0..per {
                    let s = j as f64 / per as f64;
                    let th = theta0 + s * (theta1 - theta0);
                    out.push([r0 * th.cos(), r0 * th.sin()]);
                    let th = theta1 - s * (theta1 - theta0);
                    out.push([r1 * th.cos(), r1 * th.sin()]);
                    let r = r0 + s * (r1 - r0);
                    out.push([r * theta0.cos(), r * theta0.sin()]);
                    let r = r1 - s * (r1 - r0);
                    out.push([r * theta1.cos(), r * theta1.sin()]);
                }
                out
            }
        }
    }

    /// Distance from an exterior point to the region (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        match self.shape {
            RegionShape::Disk { center, radius } => dist(center, p) - radius,
            RegionShape::Rectangle { min, max } => {
                let dx = (min[0] - p[0]).max(0.0).max(p[0] - max[0]);
                let dy = (min[1] - p[1]).max(0.0).max(p[1] - max[1]);
                dx.hypot(dy)
            }
            RegionShape::Sector { .. } => {
                self.boundary_samples(2048).into_iter().map(|q| dist(q, p)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.boundary_samples(256))
    }
}

fn angle_in(a: f64, lo: f64, hi: f64) -> bool {
    let d = (a - lo).rem_euclid(2.0 * PI);
    d <= hi - lo + 1e-15
}

/// Geometric object taking part in a separation check.
#[derive(Clone, Copy, Debug)]
pub enum GeomObject<'a> {
    Curve(&'a ClosedCurve),
    Arc(&'a OpenArc),
    Region(&'a RegionSpec),
    Point(Point),
}

impl GeomObject<'_> {
    fn label(&self, i: usize) -> String {
        match self {
            GeomObject::Curve(_) => format!("curve #{i}"),
            GeomObject::Arc(_) => format!("arc #{i}"),
            GeomObject::Region(_) => format!("region #{i}"),
            GeomObject::Point(p) => format!("point #{i} ({:.4}, {:.4})", p[0], p[1]),
        }
    }

    fn samples(&self) -> Vec<Point> {
        match self {
            GeomObject::Curve(c) => c.samples(720),
            GeomObject::Arc(a) => a.samples(400),
            GeomObject::Region(r) => r.boundary_samples(720),
            GeomObject::Point(p) => vec![*p],
        }
    }
}

/// Default threshold: 5% of the smallest diameter among extended objects.
pub const SEPARATION_FRACTION: f64 = 0.05;

/// Minimum node distance between distinct objects. Fails with
/// `SeparationViolation` below `threshold` (default: [`SEPARATION_FRACTION`]
/// × smallest object diameter), and when an object lies inside a closed curve
/// or inside a region.
pub fn min_separation(objects: &[GeomObject<'_>], threshold: Option<f64>) -> Result<f64> {
    let samples: Vec<Vec<Point>> = objects.iter().map(|o| o.samples()).collect();
    let diam = samples.iter().filter(|s| s.len() > 1).map(|s| diameter(s)).fold(f64::INFINITY, f64::min);
    let threshold = threshold.unwrap_or(if diam.is_finite() { SEPARATION_FRACTION * diam } else { 0.0 });
    let mut best = f64::INFINITY;
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            let d = set_distance(&samples[i], &samples[j]);
            let what = format!("{} vs {}", objects[i].label(i), objects[j].label(j));
            let nested = nested(&objects[i], &samples[j]) || nested(&objects[j], &samples[i]);
            if nested {
                return Err(Error::SeparationViolation { what: format!("{what}: one lies inside the other"), distance: 0.0, threshold });
            }
            if d < threshold {
                return Err(Error::SeparationViolation { what, distance: d, threshold });
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

fn nested(container: &GeomObject<'_>, other: &[Point]) -> bool {
    match container {
        GeomObject::Curve(c) => other.iter().any(|p| c.contains(*p)),
        GeomObject::Region(r) => other.iter().any(|p| r.contains(*p)),
        _ => false,
    }
}

fn set_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(dist(*p, *q));
        }
    }
    best
}

fn diameter(s: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            d = d.max(dist(s[i], s[j]));
        }
    }
    d
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Polar finite-volume grid on the annulus `a ≤ r ≤ R` with DtN truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnulusSpec {
    /// Obstacle radius.
    pub a: f64,
    /// Artificial boundary radius.
    pub big_r: f64,
    /// Number of radial intervals; rings sit at `r_i = a + i h`, `i = 0..=n_r`.
    pub n_r: usize,
    pub n_theta: usize,
    /// Fourier cutoff of the discrete DtN map.
    pub n_f: usize,
}

impl AnnulusSpec {
    pub fn new(a: f64, big_r: f64, n_r: usize, n_theta: usize, n_f: usize) -> Result<Self> {
        positive("inner radius", a)?;
        if !(big_r > a) {
            return Err(Error::Domain(format!("annulus needs R > a, got a = {a}, R = {big_r}")));
        }
        if n_r < 2 || n_theta < 8 {
            return Err(Error::Domain("annulus grid needs n_r >= 2 and n_theta >= 8".into()));
        }
        if n_theta < 2 * n_f + 1 {
            return Err(Error::Domain(format!("n_theta = {n_theta} cannot resolve DtN cutoff {n_f}")));
        }
        Ok(AnnulusSpec { a, big_r, n_r, n_theta, n_f })
    }

    /// `N_f = max(16, ⌈1.5|k|R⌉ + 10)`, capped by what the angular grid resolves.
    pub fn default_cutoff(k_abs: f64, big_r: f64, n_theta: usize) -> usize {
        let want = 16usize.max((1.5 * k_abs * big_r).ceil() as usize + 10);
        want.min((n_theta.saturating_sub(1)) / 2)
    }

    pub fn h(&self) -> f64 {
        (self.big_r - self.a) / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.a + self.h() * i as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.dtheta() * j as f64
    }

    pub fn n_rings(&self) -> usize {
        self.n_r + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_rings() * self.n_theta
    }

    /// Flat index of node `(ring i, angle j)`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        let (r, t) = (self.radius(i), self.theta(j));
        [r * t.cos(), r * t.sin()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle_conventions() {
        let c = make_curve(CurveKind::Circle, &[1.0]).unwrap();
        let g = curve_grid(&c, 8).unwrap();
        assert_eq!(g.points[0], [1.0, 0.0]);
        for j in 0..8 {
            assert!((g.normals[j][0] - g.points[j][0]).abs() < 1e-15);
            assert!((c.curvature(g.t[j]) - 1.0).abs() < 1e-14);
        }
        let g = curve_grid(&c, 64).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_curve(CurveKind::Circle, &[0.0]).is_err());
        assert!(make_curve(CurveKind::Ellipse, &[1.0, -1.0]).is_err());
        let c = ClosedCurve::circle([0.0, 0.0], 1.0).unwrap();
        assert!(curve_grid(&c, 9).is_err());
        assert!(curve_grid(&c, 6).is_err());
        let a = OpenArc::segment([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!(arc_grid(&a, 3).is_err());
    }

    #[test]
    fn kite_normals_are_outward() {
        let c = ClosedCurve::kite([0.0, 0.0], 1.0).unwrap();
        let g = curve_grid(&c, 64).unwrap();
        for j in 0..64 {
            let p = g.points[j];
            let n = g.normals[j];
            assert!(!c.contains([p[0] + 0.01 * n[0], p[1] + 0.01 * n[1]]));
            assert!(c.contains([p[0] - 0.01 * n[0], p[1] - 0.01 * n[1]]));
            let (_, d, _) = c.eval(g.t[j]);
            assert!((n[0] * d[0] + n[1] * d[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn segment_grid_is_exact() {
        let a = OpenArc::segment([-1.0, 0.5], [1.0, 0.5]).unwrap();
        let g = arc_grid(&a, 16).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let g4 = arc_grid(&a, 4).unwrap();
        let (p, q) = a.endpoints();
        assert!(g4.points.iter().all(|x| dist(*x, p) > 1e-3 && dist(*x, q) > 1e-3));
    }

    #[test]
    fn separation_checks() {
        let c = ClosedCurve::circle([0.0, 0.0], 1.0).unwrap();
        let arc = OpenArc::segment([1.5, -0.5], [1.5, 0.5]).unwrap();
        let d = min_separation(&[GeomObject::Curve(&c), GeomObject::Arc(&arc)], None).unwrap();
        assert!(d > 0.499 && d <= 0.5 + 1e-4);
        let a1 = OpenArc::segment([2.0, -1.0], [2.0, 1.0]).unwrap();
        let a2 = OpenArc::segment([1.5, 0.0], [2.5, 0.0]).unwrap();
        let e = min_separation(&[GeomObject::Arc(&a1), GeomObject::Arc(&a2)], None).unwrap_err();
        assert_eq!(e.name(), "SeparationViolation");
        let inside = min_separation(&[GeomObject::Curve(&c), GeomObject::Point([0.2, 0.1])], None).unwrap_err();
        assert_eq!(inside.name(), "SeparationViolation");
    }

    #[test]
    fn region_quadratures_measure_area() {
        let regions = [
            RegionSpec::disk([3.0, 1.0], 0.5, 8).unwrap(),
            RegionSpec::rectangle([2.0, -1.0], [3.0, 0.5], 6).unwrap(),
            RegionSpec::sector(1.5, 2.5, 0.3, 1.2, 6).unwrap(),
        ];
        for r in &regions {
            let (p, w) = r.quadrature();
            assert!((w.iter().sum::<f64>() - r.area()).abs() < 1e-12);
            assert!(p.iter().all(|x| r.contains(*x)));
        }
    }

    #[test]
    fn annulus_spec_validation() {
        assert!(AnnulusSpec::new(1.0, 0.5, 10, 32, 8).is_err());
        assert!(AnnulusSpec::new(1.0, 2.0, 10, 32, 16).is_err());
        let s = AnnulusSpec::new(1.0, 3.0, 20, 64, 20).unwrap();
        assert_eq!(s.n_nodes(), 21 * 64);
        assert!((s.radius(20) - 3.0).abs() < 1e-15);
        assert_eq!(AnnulusSpec::default_cutoff(2.0, 3.0, 64), 19);
    }
}
