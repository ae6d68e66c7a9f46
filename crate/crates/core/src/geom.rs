//! Zonotopes, zonogons and convex polygons in the complex plane.
//!
//! Points are `(re, im)` pairs. All polygons produced here are convex and
//! listed counter-clockwise without repeated or collinear vertices.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::{Error, Result, C64};

pub type Point = Vector2<f64>;

/// Absolute tolerance for collinearity and containment.
pub const GEOM_TOL: f64 = 1e-9;

pub fn pt(z: C64) -> Point {
    Point::new(z.re, z.im)
}

pub fn to_c64(p: &Point) -> C64 {
    C64::new(p.x, p.y)
}

fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Zonotope `{center + G β : β ∈ [-1, 1]^p}`, generators stored as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Zonotope {
    pub center: DVector<f64>,
    pub generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::InvalidInput(format!(
                "zonotope generators have dimension {} but the center has {}",
                generators.nrows(),
                center.len()
            )));
        }
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("zonotope has non-finite entries".into()));
        }
        Ok(Self { center, generators })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let d = center.len();
        Self { center, generators: DMatrix::zeros(d, 0) }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn order(&self) -> usize {
        self.generators.ncols()
    }

    /// Image under `x ↦ m x + offset`.
    pub fn affine_map(&self, m: &DMatrix<f64>, offset: &DVector<f64>) -> Zonotope {
        Zonotope { center: m * &self.center + offset, generators: m * &self.generators }
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &Zonotope) -> Zonotope {
        let (d1, d2) = (self.dim(), other.dim());
        let (p1, p2) = (self.order(), other.order());
        let mut center = DVector::zeros(d1 + d2);
        center.rows_mut(0, d1).copy_from(&self.center);
        center.rows_mut(d1, d2).copy_from(&other.center);
        let mut g = DMatrix::zeros(d1 + d2, p1 + p2);
        g.view_mut((0, 0), (d1, p1)).copy_from(&self.generators);
        g.view_mut((d1, p1), (d2, p2)).copy_from(&other.generators);
        Zonotope { center, generators: g }
    }

    /// Point for generator weights `beta ∈ [-1, 1]^p`.
    pub fn at(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.generators * beta
    }

    /// The zonogon of a two-dimensional zonotope.
    pub fn as_zonogon(&self) -> Result<Zonogon> {
        if self.dim() != 2 {
            return Err(Error::InvalidInput(format!("zonogon needs dimension 2, got {}", self.dim())));
        }
        Ok(Zonogon {
            center: Point::new(self.center[0], self.center[1]),
            generators: self.generators.column_iter().map(|c| Point::new(c[0], c[1])).collect(),
        })
    }
}

pub fn minkowski_sum(a: &Zonotope, b: &Zonotope) -> Result<Zonotope> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("cannot add zonotopes of dimension {} and {}", a.dim(), b.dim())));
    }
    let mut g = DMatrix::zeros(a.dim(), a.order() + b.order());
    g.view_mut((0, 0), (a.dim(), a.order())).copy_from(&a.generators);
    g.view_mut((0, a.order()), (a.dim(), b.order())).copy_from(&b.generators);
    Ok(Zonotope { center: &a.center + &b.center, generators: g })
}

/// Two-dimensional zonotope.
#[derive(Clone, Debug, PartialEq)]
pub struct Zonogon {
    pub center: Point,
    pub generators: Vec<Point>,
}

impl Zonogon {
    pub fn new(center: Point, generators: Vec<Point>) -> Self {
        Self { center, generators }
    }

    pub fn from_complex(center: C64, generators: impl IntoIterator<Item = C64>) -> Self {
        Self { center: pt(center), generators: generators.into_iter().map(pt).collect() }
    }

    pub fn minkowski_sum(&self, other: &Zonogon) -> Zonogon {
        let mut generators = self.generators.clone();
        generators.extend_from_slice(&other.generators);
        Zonogon { center: self.center + other.center, generators }
    }

    /// Generators pointing up (horizontal ones pointing right), zero ones
    /// dropped, parallel ones merged, sorted by angle in `[0, π)`.
    pub fn normalize(&self) -> Zonogon {
        let mut gens: Vec<Point> = self
            .generators
            .iter()
            .filter(|g| g.norm() > GEOM_TOL)
            .map(|g| if g.y < 0.0 || (g.y == 0.0 && g.x < 0.0) { -g } else { *g })
            .collect();
        gens.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
        let mut merged: Vec<Point> = Vec::with_capacity(gens.len());
        for g in gens {
            match merged.last_mut() {
                Some(last) if cross(last, &g).abs() <= GEOM_TOL * last.norm().max(g.norm()) * 1e-3 && last.dot(&g) > 0.0 => {
                    *last += g
                }
                _ => merged.push(g),
            }
        }
        // the largest angle may be parallel to the first one once both wrap to π
        if merged.len() > 1 {
            let (first, last) = (merged[0], merged[merged.len() - 1]);
            if cross(&first, &last).abs() <= GEOM_TOL * first.norm().max(last.norm()) * 1e-3 {
                let l = merged.pop().unwrap();
                merged[0] += if first.dot(&l) > 0.0 { l } else { -l };
            }
        }
        Zonogon { center: self.center, generators: merged }
    }

    /// Vertices by the angular walk from the bottommost vertex.
    pub fn vertices(&self) -> Polygon {
        let z = self.normalize();
        if z.generators.is_empty() {
            return Polygon { vertices: vec![z.center] };
        }
        let sum: Point = z.generators.iter().sum();
        let mut v = z.center - sum;
        let mut out = Vec::with_capacity(2 * z.generators.len());
        for sign in [2.0, -2.0] {
            for g in &z.generators {
                out.push(v);
                v += g * sign;
            }
        }
        Polygon { vertices: out }
    }
}

/// Half-plane `normal · x ≤ offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

/// Regular polygon with apothem 1 in G- and H-representation.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularPolygonNoise {
    pub sides: usize,
    pub zonogon: Zonogon,
    pub rows: Vec<HalfPlane>,
}

pub fn regular_polygon_noise(sides: usize) -> Result<RegularPolygonNoise> {
    if sides < 4 || !sides.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("polygon side count must be even and at least 4, got {sides}")));
    }
    let n = sides as f64;
    let half_edge = (PI / n).tan();
    let generators = (1..=sides / 2)
        .map(|l| {
            let phi = 2.0 * PI * l as f64 / n;
            Point::new(phi.sin(), phi.cos()) * half_edge
        })
        .collect();
    let rows = (1..=sides)
        .map(|l| {
            let phi = 2.0 * PI * l as f64 / n;
            HalfPlane { normal: Point::new(phi.cos(), phi.sin()), offset: 1.0 }
        })
        .collect();
    Ok(RegularPolygonNoise { sides, zonogon: Zonogon::new(Point::zeros(), generators), rows })
}

/// Convex polygon, counter-clockwise. Zero vertices is the empty set, one a
/// point, two a segment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn empty() -> Self {
        Self { vertices: vec![] }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        (0..n).map(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n])).sum::<f64>() / 2.0
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        contains(self, x, tol)
    }

    /// One `re,im` row per vertex after a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im\n");
        for v in &self.vertices {
            let _ = writeln!(s, "{},{}", v.x, v.y);
        }
        s
    }

    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (Point::new(lo.x.min(v.x), lo.y.min(v.y)), Point::new(hi.x.max(v.x), hi.y.max(v.y)))
        }))
    }
}

fn dedup(points: &[Point], tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - p).norm() <= tol) {
            out.push(*p);
        }
    }
    out
}

/// Gift-wrapping hull.
pub fn convex_hull(points: &[Point]) -> Polygon {
    let pts = dedup(points, GEOM_TOL * 1e-3);
    if pts.len() <= 1 {
        return Polygon { vertices: pts };
    }
    let start = (0..pts.len())
        .min_by(|&i, &j| pts[i].y.total_cmp(&pts[j].y).then(pts[i].x.total_cmp(&pts[j].x)))
        .unwrap();
    let mut hull = vec![start];
    let mut cur = start;
    for _ in 0..=pts.len() {
        let mut cand = if cur == 0 { 1 } else { 0 };
        for i in 0..pts.len() {
            if i == cur || i == cand {
                continue;
            }
            let d = pts[cand] - pts[cur];
            let e = pts[i] - pts[cur];
            let dist = cross(&d, &e) / d.norm();
            if dist < -GEOM_TOL || (dist.abs() <= GEOM_TOL && e.norm() > d.norm() && d.dot(&e) > 0.0) {
                cand = i;
            }
        }
        if cand == start {
            break;
        }
        hull.push(cand);
        cur = cand;
    }
    let vertices: Vec<Point> = hull.into_iter().map(|i| pts[i]).collect();
    Polygon { vertices: drop_collinear(vertices) }
}

fn drop_collinear(mut v: Vec<Point>) -> Vec<Point> {
    if v.len() < 3 {
        return v;
    }
    let mut changed = true;
    while changed && v.len() >= 3 {
        changed = false;
        let n = v.len();
        for i in 0..n {
            let (a, b, c) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
            let ac = c - a;
            let len = ac.norm();
            if len == 0.0 || (cross(&ac, &(b - a)) / len).abs() <= GEOM_TOL && (b - a).dot(&ac) >= 0.0 && (b - c).dot(&-ac) >= 0.0 {
                v.remove(i);
                changed = true;
                break;
            }
        }
    }
    v
}

pub fn hull_with_origin(p: &Polygon) -> Polygon {
    let mut pts = p.vertices.clone();
    pts.push(Point::zeros());
    convex_hull(&pts)
}

/// Hull of all pairwise vertex sums.
pub fn minkowski_polygons(a: &Polygon, b: &Polygon) -> Polygon {
    let mut pts = Vec::with_capacity(a.len() * b.len());
    for p in &a.vertices {
        for q in &b.vertices {
            pts.push(p + q);
        }
    }
    convex_hull(&pts)
}

/// Intersection with `{x : a·x ≥ b}`.
pub fn clip_halfplane(p: &Polygon, a: &Point, b: f64) -> Polygon {
    let scale = a.norm();
    if scale == 0.0 {
        return if b <= 0.0 { p.clone() } else { Polygon::empty() };
    }
    let (a, b) = (a / scale, b / scale);
    let side = |x: &Point| a.dot(x) - b;
    let n = p.vertices.len();
    let mut out = Vec::new();
    for i in 0..n {
        let cur = p.vertices[i];
        let next = p.vertices[(i + 1) % n];
        let (sc, sn) = (side(&cur), side(&next));
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0) {
            let t = sc / (sc - sn);
            out.push(cur + (next - cur) * t);
        }
    }
    convex_hull(&out)
}

/// Membership within `tol` of a convex polygon.
pub fn contains(p: &Polygon, x: &Point, tol: f64) -> bool {
    match p.vertices.as_slice() {
        [] => false,
        [v] => (x - v).norm() <= tol,
        [a, b] => segment_distance(a, b, x) <= tol,
        vs => {
            let n = vs.len();
            (0..n).all(|i| {
                let (a, b) = (vs[i], vs[(i + 1) % n]);
                let d = b - a;
                cross(&d, &(x - a)) / d.norm() >= -tol
            })
        }
    }
}

fn segment_distance(a: &Point, b: &Point, x: &Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((x - a).dot(&d) / len2).clamp(0.0, 1.0) };
    (a + d * t - x).norm()
}

/// True when both polygons list the same vertices up to a cyclic shift.
pub fn polygons_match(a: &Polygon, b: &Polygon, tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    let n = a.len();
    (0..n).any(|shift| (0..n).all(|i| (a.vertices[i] - b.vertices[(i + shift) % n]).norm() <= tol))
}

/// Static SVG plot of polygons and point markers with the imaginary axis up.
#[derive(Clone, Debug, Default)]
pub struct SvgPlot {
    polygons: Vec<(Polygon, String)>,
    markers: Vec<(Point, String)>,
}

impl SvgPlot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn polygon(&mut self, p: &Polygon, color: &str) -> &mut Self {
        self.polygons.push((p.clone(), color.to_string()));
        self
    }

    pub fn marker(&mut self, x: Point, color: &str) -> &mut Self {
        self.markers.push((x, color.to_string()));
        self
    }

    pub fn render(&self, size: f64) -> String {
        let pts = self.polygons.iter().flat_map(|(p, _)| p.vertices.iter().copied()).chain(self.markers.iter().map(|(m, _)| *m));
        let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
        for p in pts {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            lo = Point::new(-1.0, -1.0);
            hi = Point::new(1.0, 1.0);
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
        let pad = 0.05 * span;
        let scale = size / (span + 2.0 * pad);
        let map = |p: &Point| ((p.x - lo.x + pad) * scale, (hi.y - p.y + pad) * scale);
        let w = (hi.x - lo.x + 2.0 * pad) * scale;
        let h = (hi.y - lo.y + 2.0 * pad) * scale;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.1}\" height=\"{h:.1}\" viewBox=\"0 0 {w:.1} {h:.1}\">\n"
        );
        let (ox, oy) = map(&Point::zeros());
        let _ = writeln!(s, "<line x1=\"0\" y1=\"{oy:.2}\" x2=\"{w:.1}\" y2=\"{oy:.2}\" stroke=\"#ccc\"/>");
        let _ = writeln!(s, "<line x1=\"{ox:.2}\" y1=\"0\" x2=\"{ox:.2}\" y2=\"{h:.1}\" stroke=\"#ccc\"/>");
        for (p, color) in &self.polygons {
            let d: Vec<String> = p
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let (x, y) = map(v);
                    format!("{}{x:.3},{y:.3}", if i == 0 { "M" } else { "L" })
                })
                .collect();
            if !d.is_empty() {
                let _ = writeln!(
                    s,
                    "<path d=\"{} Z\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"{color}\"/>",
                    d.join(" ")
                );
            }
        }
        for (m, color) in &self.markers {
            let (x, y) = map(m);
            let _ = writeln!(s, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"3\" fill=\"{color}\"/>");
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(v: &[(f64, f64)]) -> Polygon {
        Polygon { vertices: v.iter().map(|&(x, y)| Point::new(x, y)).collect() }
    }

    fn square() -> Polygon {
        poly(&[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
    }

    #[test]
    fn segment_zonogon() {
        let v = Zonogon::new(Point::zeros(), vec![Point::new(1.0, 1.0)]).vertices();
        assert!(polygons_match(&v, &poly(&[(-1.0, -1.0), (1.0, 1.0)]), 1e-12));
    }

    #[test]
    fn diamond_zonogon() {
        let v = Zonogon::new(Point::zeros(), vec![Point::new(1.0, 1.0), Point::new(-1.0, 1.0)]).vertices();
        assert!(polygons_match(&v, &poly(&[(0.0, -2.0), (2.0, 0.0), (0.0, 2.0), (-2.0, 0.0)]), 1e-12));
    }

    #[test]
    fn four_sided_noise_is_square() {
        let noise = regular_polygon_noise(4).unwrap();
        assert!(polygons_match(&noise.zonogon.vertices(), &square(), 1e-12));
        for v in &square().vertices {
            assert!(noise.rows.iter().all(|r| r.normal.dot(v) <= r.offset + 1e-12));
        }
    }

    #[test]
    fn noise_vertex_sets_agree() {
        for n in [4, 6, 20, 64] {
            let noise = regular_polygon_noise(n).unwrap();
            let v = noise.zonogon.vertices();
            assert_eq!(v.len(), n);
            for x in &v.vertices {
                let active = noise.rows.iter().filter(|r| (r.normal.dot(x) - r.offset).abs() < 1e-9).count();
                assert_eq!(active, 2);
                assert!((x.norm() - 1.0 / (PI / n as f64).cos()).abs() < 1e-9);
            }
        }
        assert!(regular_polygon_noise(5).is_err());
        assert!(regular_polygon_noise(2).is_err());
    }

    #[test]
    fn hull_basics() {
        assert_eq!(convex_hull(&[Point::zeros()]).len(), 1);
        let tri = convex_hull(&poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.25, 0.25)]).vertices);
        assert!(polygons_match(&tri, &poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]), 0.0));
        let col = convex_hull(&poly(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.5, 0.5)]).vertices);
        assert!(polygons_match(&col, &poly(&[(0.0, 0.0), (2.0, 2.0)]), 0.0));
    }

    #[test]
    fn origin_hull() {
        assert!(polygons_match(&hull_with_origin(&square()), &square(), 0.0));
        let seg = hull_with_origin(&poly(&[(1.0, 0.0), (2.0, 0.0)]));
        assert!(polygons_match(&seg, &poly(&[(0.0, 0.0), (2.0, 0.0)]), 0.0));
    }

    #[test]
    fn clipping() {
        let right = clip_halfplane(&square(), &Point::new(1.0, 0.0), 0.0);
        assert!(polygons_match(&right, &poly(&[(0.0, -1.0), (1.0, -1.0), (1.0, 1.0), (0.0, 1.0)]), 1e-12));
        assert!(clip_halfplane(&square(), &Point::new(1.0, 0.0), 2.0).is_empty());
        assert!(polygons_match(&clip_halfplane(&square(), &Point::new(1.0, 0.0), -5.0), &square(), 0.0));
        // z = j gives normal (Im z, -Re z) = (1, 0)
        let z = C64::new(0.0, 1.0);
        let cut = clip_halfplane(&square(), &Point::new(z.im, -z.re), 0.0);
        assert!(cut.vertices.iter().all(|v| v.x >= -1e-12));
    }

    #[test]
    fn membership() {
        assert!(square().contains(&Point::zeros(), 0.0));
        assert!(!square().contains(&Point::new(2.0, 0.0), 1e-9));
        assert!(square().contains(&Point::new(1.0, 1.0), 1e-9));
        assert!(poly(&[(0.0, 0.0), (1.0, 0.0)]).contains(&Point::new(0.5, 0.0), 1e-9));
        assert!(!Polygon::empty().contains(&Point::zeros(), 1.0));
    }

    #[test]
    fn zonotope_sum_and_zonogon_sum() {
        let a = Zonotope::new(DVector::from_vec(vec![1.0, 0.0]), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let b = Zonotope::new(DVector::from_vec(vec![0.0, 0.0]), DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let s = minkowski_sum(&a, &b).unwrap().as_zonogon().unwrap().vertices();
        assert!(polygons_match(&s, &poly(&[(0.0, -1.0), (2.0, -1.0), (2.0, 1.0), (0.0, 1.0)]), 1e-12));
        let c = Zonotope::point(DVector::zeros(3));
        assert!(minkowski_sum(&a, &c).is_err());
        assert_eq!(a.product(&c).dim(), 5);
    }

    #[test]
    fn parallel_generators_merge() {
        let z = Zonogon::new(Point::zeros(), vec![Point::new(1.0, 0.0), Point::new(-2.0, 0.0), Point::new(0.0, 1.0)]);
        let n = z.normalize();
        assert_eq!(n.generators.len(), 2);
        assert!((n.generators[0] - Point::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn area_and_csv() {
        assert!((square().area() - 4.0).abs() < 1e-12);
        assert!(square().to_csv().starts_with("re,im\n-1,-1\n"));
        let svg = {
            let mut p = SvgPlot::new();
            p.polygon(&square(), "#06c").marker(Point::zeros(), "red");
            p.render(200.0)
        };
        assert!(svg.contains("<path") && svg.contains("<circle"));
    }
}
