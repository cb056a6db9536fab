//! Test shapes with exact support functions, the penetration integral and
//! convex-hull assembly from support estimates.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Strictly convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "polygon needs at least 3 vertices, got {n}"
            )));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("polygon vertex is not finite".into()));
        }
        let mut winding = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(sub(b, a), sub(c, b)) <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "polygon is not strictly convex and counterclockwise at vertex {}",
                    (i + 1) % n
                )));
            }
            let (ea, eb) = (sub(b, a), sub(c, b));
            winding += cross(ea, eb).atan2(dot(ea, eb));
        }
        // turning angles must add up to exactly one revolution
        if (winding - TAU).abs() > 1e-6 {
            return Err(Error::InvalidInput("polygon winds more than once".into()));
        }
        Ok(ConvexPolygon { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n]))
            .sum::<f64>()
    }

    pub fn support(&self, rho: Point) -> f64 {
        self.vertices
            .iter()
            .map(|&v| dot(v, rho))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Open interior test by edge half-plane signs.
    pub fn contains(&self, x: Point) -> bool {
        self.edges().all(|(a, b)| cross(sub(b, a), sub(x, a)) > 0.0)
    }

    fn contains_closed(&self, x: Point, tol: f64) -> bool {
        self.edges()
            .all(|(a, b)| cross(sub(b, a), sub(x, a)) >= -tol * norm(sub(b, a)))
    }

    /// Euclidean distance from `x` to the closed polygon (0 inside).
    pub fn distance(&self, x: Point) -> f64 {
        if self.contains_closed(x, 0.0) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| segment_distance(x, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    fn bbox(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Axis-aligned rectangle, if the polygon is one.
    pub fn as_rectangle(&self) -> Option<(Point, Point)> {
        if self.vertices.len() != 4 {
            return None;
        }
        let (lo, hi) = self.bbox();
        let corner = |v: &Point| {
            (v[0] == lo[0] || v[0] == hi[0]) && (v[1] == lo[1] || v[1] == hi[1])
        };
        self.vertices.iter().all(corner).then_some((lo, hi))
    }
}

fn segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(x, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(x, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

/// Disk, convex polygon, or a disjoint union of those. The empty union is the
/// empty set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "ShapeSpec", into = "ShapeSpec")]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    Polygon(ConvexPolygon),
    Union(Vec<Shape>),
}

/// Unvalidated serialised form of [`Shape`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Disk { center: Point, radius: f64 },
    Polygon { vertices: Vec<Point> },
    Union { members: Vec<ShapeSpec> },
    Empty,
}

impl TryFrom<ShapeSpec> for Shape {
    type Error = Error;

    fn try_from(spec: ShapeSpec) -> Result<Shape> {
        match spec {
            ShapeSpec::Disk { center, radius } => Shape::disk(center, radius),
            ShapeSpec::Polygon { vertices } => Ok(Shape::Polygon(ConvexPolygon::new(vertices)?)),
            ShapeSpec::Union { members } => Shape::union(
                members
                    .into_iter()
                    .map(Shape::try_from)
                    .collect::<Result<Vec<_>>>()?,
            ),
            ShapeSpec::Empty => Ok(Shape::empty()),
        }
    }
}

impl From<Shape> for ShapeSpec {
    fn from(shape: Shape) -> ShapeSpec {
        match shape {
            Shape::Disk { center, radius } => ShapeSpec::Disk { center, radius },
            Shape::Polygon(poly) => ShapeSpec::Polygon {
                vertices: poly.vertices,
            },
            Shape::Union(members) if members.is_empty() => ShapeSpec::Empty,
            Shape::Union(members) => ShapeSpec::Union {
                members: members.into_iter().map(ShapeSpec::from).collect(),
            },
        }
    }
}

impl Shape {
    pub fn disk(center: Point, radius: f64) -> Result<Shape> {
        if !(radius.is_finite() && radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "disk needs a finite center and positive radius, got {center:?}, {radius}"
            )));
        }
        Ok(Shape::Disk { center, radius })
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Shape> {
        Ok(Shape::Polygon(ConvexPolygon::new(vertices)?))
    }

    /// Axis-aligned rectangle `[lo, hi]`.
    pub fn rectangle(lo: Point, hi: Point) -> Result<Shape> {
        Shape::polygon(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    pub fn unit_square() -> Shape {
        Shape::rectangle([0.0, 0.0], [1.0, 1.0]).expect("unit square is valid")
    }

    pub fn empty() -> Shape {
        Shape::Union(Vec::new())
    }

    /// Flattens nested unions and checks that members are pairwise separated.
    pub fn union(members: Vec<Shape>) -> Result<Shape> {
        let mut flat = Vec::new();
        for m in members {
            match m {
                Shape::Union(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        for i in 0..flat.len() {
            for j in i + 1..flat.len() {
                if !separated(&flat[i], &flat[j]) {
                    return Err(Error::InvalidInput(format!(
                        "union members {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(Shape::Union(flat))
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Shape::Union(members) => members.iter().all(Shape::is_empty),
            _ => false,
        }
    }

    /// `sup_{x in shape} x.rho`; `-inf` for the empty set.
    pub fn support(&self, rho: Point) -> f64 {
        match self {
            Shape::Disk { center, radius } => dot(*center, rho) + radius * norm(rho),
            Shape::Polygon(poly) => poly.support(rho),
            Shape::Union(members) => members
                .iter()
                .map(|m| m.support(rho))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Membership in the open shape.
    pub fn contains(&self, x: Point) -> bool {
        match self {
            Shape::Disk { center, radius } => norm(sub(x, *center)) < *radius,
            Shape::Polygon(poly) => poly.contains(x),
            Shape::Union(members) => members.iter().any(|m| m.contains(x)),
        }
    }

    /// Bounding box, `None` for the empty set.
    pub fn bbox(&self) -> Option<(Point, Point)> {
        match self {
            Shape::Disk { center, radius } => Some((
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            )),
            Shape::Polygon(poly) => Some(poly.bbox()),
            Shape::Union(members) => members.iter().filter_map(Shape::bbox).reduce(|a, b| {
                (
                    [a.0[0].min(b.0[0]), a.0[1].min(b.0[1])],
                    [a.1[0].max(b.1[0]), a.1[1].max(b.1[1])],
                )
            }),
        }
    }

    /// Exact area.
    pub fn area(&self) -> f64 {
        match self {
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Polygon(poly) => poly.area(),
            Shape::Union(members) => members.iter().map(Shape::area).sum(),
        }
    }

    /// Some point of the shape (disk center, polygon centroid of vertices, or
    /// that of the first union member).
    pub fn interior_point(&self) -> Option<Point> {
        match self {
            Shape::Disk { center, .. } => Some(*center),
            Shape::Polygon(poly) => {
                let n = poly.vertices.len() as f64;
                let s = poly
                    .vertices
                    .iter()
                    .fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
                Some([s[0] / n, s[1] / n])
            }
            Shape::Union(members) => members.iter().find_map(Shape::interior_point),
        }
    }

    /// Every disk and polygon member, with unions flattened.
    fn atoms(&self) -> Vec<&Shape> {
        match self {
            Shape::Union(members) => members.iter().flat_map(Shape::atoms).collect(),
            other => vec![other],
        }
    }

    /// Largest `|h_self(rho) - h_other(rho)|` over `samples` equally spaced unit
    /// directions. For convex hulls this converges to their Hausdorff distance.
    pub fn support_distance(&self, other: &Shape, samples: usize) -> f64 {
        (0..samples)
            .map(|k| {
                let (s, c) = (TAU * k as f64 / samples as f64).sin_cos();
                (self.support([c, s]) - other.support([c, s])).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Strict separation test between two non-union shapes.
fn separated(a: &Shape, b: &Shape) -> bool {
    let atoms_a = a.atoms();
    let atoms_b = b.atoms();
    atoms_a
        .iter()
        .all(|x| atoms_b.iter().all(|y| separated_atoms(x, y)))
}

fn separated_atoms(a: &Shape, b: &Shape) -> bool {
    match (a, b) {
        (
            Shape::Disk {
                center: c1,
                radius: r1,
            },
            Shape::Disk {
                center: c2,
                radius: r2,
            },
        ) => norm(sub(*c1, *c2)) > r1 + r2,
        (Shape::Disk { center, radius }, Shape::Polygon(poly))
        | (Shape::Polygon(poly), Shape::Disk { center, radius }) => poly.distance(*center) > *radius,
        (Shape::Polygon(p), Shape::Polygon(q)) => {
            // separating axis among the edge normals of both polygons
            [(p, q), (q, p)].iter().any(|(s, o)| {
                s.edges().any(|(u, v)| {
                    let e = sub(v, u);
                    let normal = [e[1], -e[0]];
                    let hs = s.support(normal);
                    let lo = o
                        .vertices
                        .iter()
                        .map(|&w| dot(w, normal))
                        .fold(f64::INFINITY, f64::min);
                    lo > hs
                })
            })
        }
        _ => true,
    }
}

/// Midpoint-rule approximation of `int_D exp(-p tau (h_D(rho) - x.rho)) dx`
/// on a grid of square cells of side `cell` covering the bounding box of `D`;
/// a cell counts when its midpoint lies in `D`.
pub fn penetration_integral(d: &Shape, rho: Point, tau: f64, p: f64, cell: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    crate::wolff::validate_exponent(p)?;
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::InvalidInput(format!("cell must be positive, got {cell}")));
    }
    let ratio = p * tau * cell;
    if ratio > 0.2 {
        return Err(Error::Resolution {
            what: "p * tau * cell",
            value: ratio,
            limit: 0.2,
        });
    }
    let Some((lo, hi)) = d.bbox() else {
        return Ok(0.0);
    };
    let h = d.support(rho);
    let nx = ((hi[0] - lo[0]) / cell).ceil() as usize;
    let ny = ((hi[1] - lo[1]) / cell).ceil() as usize;
    let mut total = 0.0;
    for j in 0..ny {
        let y = lo[1] + (j as f64 + 0.5) * cell;
        for i in 0..nx {
            let x = [lo[0] + (i as f64 + 0.5) * cell, y];
            if d.contains(x) {
                total += (-p * tau * (h - dot(x, rho))).exp();
            }
        }
    }
    Ok(total * cell * cell)
}

/// Estimated support value in direction `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    pub rho: Point,
    pub h_hat: f64,
    pub slope_fit_residual: f64,
}

/// Polygon `∩_rho {x : x.rho <= h_hat(rho)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HullResult {
    pub vertices: Vec<Point>,
    pub directions_used: Vec<Point>,
}

impl HullResult {
    pub fn polygon(&self) -> Result<ConvexPolygon> {
        ConvexPolygon::new(self.vertices.clone())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y")?;
        for v in &self.vertices {
            writeln!(out, "{},{}", v[0], v[1])?;
        }
        Ok(())
    }
}

/// Directions closer than this (radians) are merged, keeping the tighter bound.
const PARALLEL_GAP: f64 = 1e-9;

/// Intersects the half-planes `x.rho <= h_hat` of the estimates.
///
/// The directions are sorted by angle and near-parallel ones merged; the
/// region is then cut out of a large box one half-plane at a time. Directions
/// must positively span the plane (every angular gap below pi).
pub fn halfspace_intersection(estimates: &[SupportEstimate]) -> Result<HullResult> {
    if estimates.len() < 3 {
        return Err(Error::Unbounded);
    }
    let mut planes: Vec<(f64, Point, f64)> = Vec::with_capacity(estimates.len());
    for e in estimates {
        let n = norm(e.rho);
        if !(n > 0.0 && n.is_finite() && e.h_hat.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid support estimate {e:?}")));
        }
        let rho = [e.rho[0] / n, e.rho[1] / n];
        planes.push((rho[1].atan2(rho[0]).rem_euclid(TAU), rho, e.h_hat));
    }
    planes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut merged: Vec<(f64, Point, f64)> = Vec::with_capacity(planes.len());
    for plane in planes {
        match merged.last_mut() {
            Some(last) if plane.0 - last.0 < PARALLEL_GAP => {
                if plane.2 < last.2 {
                    *last = plane;
                }
            }
            _ => merged.push(plane),
        }
    }
    if merged.len() > 1 && merged[0].0 + TAU - merged[merged.len() - 1].0 < PARALLEL_GAP {
        let last = merged.pop().expect("non-empty");
        if last.2 < merged[0].2 {
            merged[0] = last;
        }
    }

    let m = merged.len();
    let max_gap = (0..m)
        .map(|i| {
            let next = if i + 1 < m { merged[i + 1].0 } else { merged[0].0 + TAU };
            next - merged[i].0
        })
        .fold(0.0, f64::max);
    if m < 3 || max_gap >= PI - 1e-12 {
        return Err(Error::Unbounded);
    }

    let scale = merged.iter().map(|p| p.2.abs()).fold(1.0, f64::max);
    let big = 1e6 * scale;
    let mut poly: Vec<Point> = vec![[-big, -big], [big, -big], [big, big], [-big, big]];
    for &(_, rho, h) in &merged {
        poly = clip(&poly, rho, h);
        if poly.len() < 3 {
            return Err(Error::EmptyIntersection);
        }
    }
    if poly.iter().any(|v| v[0].abs() >= 0.5 * big || v[1].abs() >= 0.5 * big) {
        return Err(Error::Unbounded);
    }
    let vertices = simplify(poly, 1e-12 * scale);
    if vertices.len() < 3 || signed_area(&vertices) <= 1e-14 * scale * scale {
        return Err(Error::EmptyIntersection);
    }
    Ok(HullResult {
        vertices,
        directions_used: merged.iter().map(|p| p.1).collect(),
    })
}

/// Sutherland-Hodgman step: keep the part of a convex polygon with `x.rho <= h`.
fn clip(poly: &[Point], rho: Point, h: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let fa = dot(a, rho) - h;
        let fb = dot(b, rho) - h;
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Drops repeated and collinear vertices.
fn simplify(poly: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::with_capacity(poly.len());
    for v in poly {
        if pts.last().is_none_or(|&l| norm(sub(v, l)) > tol) {
            pts.push(v);
        }
    }
    while pts.len() > 1 && norm(sub(pts[0], pts[pts.len() - 1])) <= tol {
        pts.pop();
    }
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            let len = norm(sub(c, a)).max(f64::MIN_POSITIVE);
            if cross(sub(b, a), sub(c, a)).abs() / len <= tol {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    pts
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|i| cross(poly[i], poly[(i + 1) % n])).sum::<f64>()
}

/// Hausdorff distance between two convex polygons, taken as regions: the
/// largest distance from a vertex of one to the other polygon.
pub fn hausdorff_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let one_way = |p: &ConvexPolygon, q: &ConvexPolygon| {
        p.vertices
            .iter()
            .map(|&v| q.distance(v))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Number of directions used when comparing a polygon with a curved hull.
pub const HULL_COMPARISON_DIRECTIONS: usize = 1 << 16;

/// Hausdorff distance between a polygon and the convex hull of `shape`,
/// through the sup-norm of the support-function difference.
pub fn hull_distance(poly: &ConvexPolygon, shape: &Shape) -> f64 {
    Shape::Polygon(poly.clone()).support_distance(shape, HULL_COMPARISON_DIRECTIONS)
}
