//! Matched triangulations of the conduit / dual-porosity geometry.
//!
//! Both constructors produce tensor-product grids split along the
//! bottom-left to top-right diagonal, so every triangle is counter-clockwise
//! and the interface is always resolved by mesh edges.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Tolerance on barycentric coordinates used for containment tests.
pub const BARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    Conduit,
    Porous,
}

impl Subdomain {
    pub fn index(self) -> usize {
        match self {
            Subdomain::Conduit => 0,
            Subdomain::Porous => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryLabel {
    /// No-slip / Dirichlet wall of the conduit.
    ConduitWall,
    ConduitInflow,
    /// Do-nothing traction boundary.
    ConduitOutflow,
    /// Exterior boundary of the porous block. Segment 0 is the whole
    /// exterior for the stacked-squares geometry; the wellbore uses 1..=5.
    PorousExterior(u8),
    Interface,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Vertex indices in ascending order.
    pub vertices: [usize; 2],
    pub triangles: [Option<usize>; 2],
    pub conduit_label: Option<BoundaryLabel>,
    pub porous_label: Option<BoundaryLabel>,
    /// Reference unit normal. On the interface this is `n_d` (porous to
    /// conduit), on a single-sided boundary it is outward, and on interior
    /// edges it is the tangent `v1 - v0` rotated clockwise.
    pub normal: Point,
    pub length: f64,
}

impl Edge {
    pub fn is_interface(&self) -> bool {
        self.conduit_label == Some(BoundaryLabel::Interface)
    }

    pub fn label(&self, side: Subdomain) -> Option<BoundaryLabel> {
        match side {
            Subdomain::Conduit => self.conduit_label,
            Subdomain::Porous => self.porous_label,
        }
    }

    /// Unit tangent from the lower to the higher vertex.
    pub fn tangent(&self) -> Point {
        [-self.normal[1], self.normal[0]]
    }
}

/// Affine data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct TriGeom {
    pub p: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad: [Point; 3],
}

impl TriGeom {
    pub fn new(p: [Point; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let inv = 1.0 / det;
        let grad = [
            [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
            [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
            [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
        ];
        TriGeom { p, area: 0.5 * det, grad }
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        [
            bary[0] * self.p[0][0] + bary[1] * self.p[1][0] + bary[2] * self.p[2][0],
            bary[0] * self.p[0][1] + bary[1] * self.p[1][1] + bary[2] * self.p[2][1],
        ]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let dx = x[0] - self.p[0][0];
        let dy = x[1] - self.p[0][1];
        let l1 = self.grad[1][0] * dx + self.grad[1][1] * dy;
        let l2 = self.grad[2][0] * dx + self.grad[2][1] * dy;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn centroid(&self) -> Point {
        self.point([1.0 / 3.0; 3])
    }

    pub fn diameter(&self) -> f64 {
        let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        d(self.p[0], self.p[1]).max(d(self.p[1], self.p[2])).max(d(self.p[2], self.p[0]))
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<Subdomain>,
    pub edges: Vec<Edge>,
    /// `triangle_edges[t][i]` is the edge opposite local vertex `i`.
    pub triangle_edges: Vec<[usize; 3]>,
    pub interface_edges: Vec<usize>,
    pub h_global: f64,
    geoms: Vec<TriGeom>,
    by_subdomain: [Vec<usize>; 2],
}

/// Outcome of a successful point location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Located {
    pub element: usize,
    pub bary: [f64; 3],
}

/// Outcome of walking a straight segment through one subdomain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentEnd {
    pub element: usize,
    pub point: Point,
    pub bary: [f64; 3],
    /// The segment left the subdomain and was cut at its first boundary crossing.
    pub clamped: bool,
}

impl Mesh {
    /// Assembles edge connectivity and labels from raw triangles.
    ///
    /// `classify(a, b, side)` must label every edge that bounds subdomain
    /// `side` (exterior boundary, interface, or an uncoupled wall between
    /// the two subdomains).
    pub fn from_parts(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        tags: Vec<Subdomain>,
        classify: impl Fn(Point, Point, Subdomain) -> Option<BoundaryLabel>,
    ) -> Result<Mesh> {
        if triangles.len() != tags.len() {
            return Err(Error::Mesh("one subdomain tag per triangle required".into()));
        }
        for tri in triangles.iter_mut() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Mesh("triangle references a missing vertex".into()));
            }
            let g = TriGeom::new([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if g.area < 0.0 {
                tri.swap(1, 2);
            }
        }
        let geoms: Vec<TriGeom> = triangles
            .iter()
            .map(|t| TriGeom::new([vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
            .collect();
        if let Some(t) = geoms.iter().position(|g| g.area <= 0.0) {
            return Err(Error::Mesh(format!("triangle {t} is degenerate")));
        }

        let mut lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edge_verts: Vec<[usize; 2]> = Vec::new();
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::new();
        let mut triangle_edges = vec![[0usize; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = if a < b { [a, b] } else { [b, a] };
                let e = *lookup.entry(key).or_insert_with(|| {
                    edge_verts.push(key);
                    edge_tris.push([None, None]);
                    edge_verts.len() - 1
                });
                match edge_tris[e] {
                    [None, _] => edge_tris[e][0] = Some(t),
                    [Some(_), None] => edge_tris[e][1] = Some(t),
                    _ => return Err(Error::Mesh(format!("edge {key:?} shared by more than two triangles"))),
                }
                triangle_edges[t][i] = e;
            }
        }

        let mut edges = Vec::with_capacity(edge_verts.len());
        let mut interface_edges = Vec::new();
        for (e, (&verts, &owners)) in edge_verts.iter().zip(&edge_tris).enumerate() {
            let a = vertices[verts[0]];
            let b = vertices[verts[1]];
            let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let mut conduit_owner = None;
            let mut porous_owner = None;
            for t in owners.iter().flatten() {
                match tags[*t] {
                    Subdomain::Conduit => conduit_owner = Some(*t),
                    Subdomain::Porous => porous_owner = Some(*t),
                }
            }
            let two_sided_same = owners[1].is_some() && tags[owners[0].unwrap()] == tags[owners[1].unwrap()];
            let (conduit_label, porous_label) = if two_sided_same {
                (None, None)
            } else {
                let cl = conduit_owner.map(|_| classify(a, b, Subdomain::Conduit));
                let pl = porous_owner.map(|_| classify(a, b, Subdomain::Porous));
                let cl = match cl {
                    Some(None) => return Err(Error::Mesh(format!("conduit boundary edge {e} is unlabeled"))),
                    Some(Some(l)) => Some(l),
                    None => None,
                };
                let pl = match pl {
                    Some(None) => return Err(Error::Mesh(format!("porous boundary edge {e} is unlabeled"))),
                    Some(Some(l)) => Some(l),
                    None => None,
                };
                let iface = |l: Option<BoundaryLabel>| l == Some(BoundaryLabel::Interface);
                match (conduit_owner.is_some() && porous_owner.is_some(), iface(cl), iface(pl)) {
                    (true, true, true) | (true, false, false) => {}
                    (false, false, false) => {}
                    _ => {
                        return Err(Error::Mesh(format!(
                            "edge {e} has an inconsistent interface classification"
                        )))
                    }
                }
                (cl, pl)
            };

            let outward = |t: usize| -> Point {
                let tri = triangles[t];
                let i = (0..3).find(|&i| triangle_edges[t][i] == e).unwrap();
                let p = vertices[tri[(i + 1) % 3]];
                let q = vertices[tri[(i + 2) % 3]];
                [(q[1] - p[1]) / length, -(q[0] - p[0]) / length]
            };
            let normal = if let Some(t) = porous_owner.filter(|_| porous_label.is_some()) {
                outward(t)
            } else if let Some(t) = conduit_owner.filter(|_| conduit_label.is_some()) {
                outward(t)
            } else {
                [(b[1] - a[1]) / length, -(b[0] - a[0]) / length]
            };
            if conduit_label == Some(BoundaryLabel::Interface) {
                interface_edges.push(e);
            }
            edges.push(Edge {
                vertices: verts,
                triangles: owners,
                conduit_label,
                porous_label,
                normal,
                length,
            });
        }

        let h_global = geoms.iter().map(TriGeom::diameter).fold(0.0, f64::max);
        let mut by_subdomain = [Vec::new(), Vec::new()];
        for (t, tag) in tags.iter().enumerate() {
            by_subdomain[tag.index()].push(t);
        }
        Ok(Mesh {
            vertices,
            triangles,
            tags,
            edges,
            triangle_edges,
            interface_edges,
            h_global,
            geoms,
            by_subdomain,
        })
    }

    pub fn geom(&self, t: usize) -> &TriGeom {
        &self.geoms[t]
    }

    pub fn triangles_in(&self, side: Subdomain) -> &[usize] {
        &self.by_subdomain[side.index()]
    }

    pub fn area(&self, side: Subdomain) -> f64 {
        self.triangles_in(side).iter().map(|&t| self.geoms[t].area).sum()
    }

    /// Neighbor across local edge `i` of `t`, restricted to the same subdomain.
    pub fn neighbor(&self, t: usize, i: usize) -> Option<usize> {
        let e = &self.edges[self.triangle_edges[t][i]];
        let other = match e.triangles {
            [Some(a), Some(b)] if a == t => b,
            [Some(a), Some(_)] => a,
            _ => return None,
        };
        (self.tags[other] == self.tags[t]).then_some(other)
    }

    /// Triangle of the given subdomain adjacent to edge `e`, if any.
    pub fn edge_owner(&self, e: usize, side: Subdomain) -> Option<usize> {
        self.edges[e]
            .triangles
            .iter()
            .flatten()
            .copied()
            .find(|&t| self.tags[t] == side)
    }

    /// Local index (0..3) of edge `e` within triangle `t`.
    pub fn local_edge(&self, t: usize, e: usize) -> Option<usize> {
        self.triangle_edges[t].iter().position(|&x| x == e)
    }

    /// Outward unit normal of triangle `t` on its local edge `i`.
    pub fn outward_normal(&self, t: usize, i: usize) -> Point {
        let tri = self.triangles[t];
        let p = self.vertices[tri[(i + 1) % 3]];
        let q = self.vertices[tri[(i + 2) % 3]];
        let len = self.edges[self.triangle_edges[t][i]].length;
        [(q[1] - p[1]) / len, -(q[0] - p[0]) / len]
    }

    /// Exhaustive containment scan; ties go to the lowest element id.
    pub fn locate_brute_force(&self, side: Subdomain, x: Point) -> Option<Located> {
        self.triangles_in(side).iter().find_map(|&t| {
            let bary = self.geoms[t].barycentric(x);
            inside(bary).then(|| Located { element: t, bary: normalize(bary) })
        })
    }

    /// Locates `x` in the given subdomain by walking from `hint` through edge
    /// adjacency, falling back to a full scan.
    pub fn locate_point(&self, side: Subdomain, x: Point, hint: Option<usize>) -> Option<Located> {
        let Some(mut t) = hint.filter(|&t| t < self.tags.len() && self.tags[t] == side) else {
            return self.locate_brute_force(side, x);
        };
        let limit = self.triangles_in(side).len() + 1;
        for _ in 0..limit {
            let bary = self.geoms[t].barycentric(x);
            if inside(bary) {
                return Some(Located { element: t, bary: normalize(bary) });
            }
            let i = argmin(bary);
            match self.neighbor(t, i) {
                Some(n) => t = n,
                None => break,
            }
        }
        self.locate_brute_force(side, x)
    }

    /// Walks the segment `from -> to` starting in `start` (which must contain
    /// `from`) and stops either at `to` or at the first point where the
    /// segment leaves the subdomain of `start`.
    pub fn walk_segment(&self, start: usize, from: Point, to: Point) -> SegmentEnd {
        let mut t = start;
        let mut p = from;
        let limit = self.triangles_in(self.tags[start]).len() + 8;
        for _ in 0..limit {
            let g = &self.geoms[t];
            let bq = g.barycentric(to);
            if inside(bq) {
                return SegmentEnd { element: t, point: to, bary: normalize(bq), clamped: false };
            }
            let bp = g.barycentric(p);
            let mut exit = None;
            let mut s_min = f64::INFINITY;
            for i in 0..3 {
                if bq[i] < -BARY_TOL {
                    let lp = bp[i].max(0.0);
                    let s = lp / (lp - bq[i]);
                    if s < s_min {
                        s_min = s;
                        exit = Some(i);
                    }
                }
            }
            let i = exit.expect("target outside but no exit edge");
            let s = s_min.clamp(0.0, 1.0);
            let q = [p[0] + s * (to[0] - p[0]), p[1] + s * (to[1] - p[1])];
            match self.neighbor(t, i) {
                Some(n) => {
                    t = n;
                    p = q;
                }
                None => {
                    let mut bary = g.barycentric(q);
                    bary[i] = 0.0;
                    let bary = normalize(bary);
                    return SegmentEnd { element: t, point: g.point(bary), bary, clamped: true };
                }
            }
        }
        // Cycling through a degenerate vertex fan; settle for the current element.
        let g = &self.geoms[t];
        let bary = normalize(g.barycentric(p));
        SegmentEnd { element: t, point: g.point(bary), bary, clamped: true }
    }
}

fn inside(b: [f64; 3]) -> bool {
    b.iter().all(|&l| l >= -BARY_TOL)
}

fn argmin(b: [f64; 3]) -> usize {
    let mut i = 0;
    for j in 1..3 {
        if b[j] < b[i] {
            i = j;
        }
    }
    i
}

/// Clips tiny negative coordinates and renormalizes to unit sum.
fn normalize(b: [f64; 3]) -> [f64; 3] {
    let c = [b[0].max(0.0), b[1].max(0.0), b[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    [c[0] / s, c[1] / s, c[2] / s]
}

/// Divides `[a, b]` into pieces no longer than `h`, keeping the breakpoints.
fn graded_axis(breaks: &[f64], h: f64) -> Vec<f64> {
    let mut xs = vec![breaks[0]];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let m = ((len / h) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..=m {
            xs.push(if k == m { w[1] } else { w[0] + len * k as f64 / m as f64 });
        }
    }
    xs
}

/// Triangulates the tensor grid `xs x ys`, keeping cells for which `tag`
/// returns a subdomain.
fn tensor_mesh(
    xs: &[f64],
    ys: &[f64],
    tag: impl Fn(Point) -> Option<Subdomain>,
) -> (Vec<Point>, Vec<[usize; 3]>, Vec<Subdomain>) {
    let nx = xs.len();
    let mut used = vec![usize::MAX; nx * ys.len()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut tags = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<Point>| {
        let k = j * nx + i;
        if used[k] == usize::MAX {
            used[k] = vertices.len();
            vertices.push([xs[i], ys[j]]);
        }
        used[k]
    };
    for j in 0..ys.len() - 1 {
        for i in 0..nx - 1 {
            let c = [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])];
            let Some(sub) = tag(c) else { continue };
            let v00 = vid(i, j, &mut vertices);
            let v10 = vid(i + 1, j, &mut vertices);
            let v11 = vid(i + 1, j + 1, &mut vertices);
            let v01 = vid(i, j + 1, &mut vertices);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            tags.push(sub);
            tags.push(sub);
        }
    }
    (vertices, triangles, tags)
}

/// Two stacked rectangles: porous block `[0, w] x [0, hd]` below the
/// conduit `[0, w] x [hd, hd + hc]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StackedSquares {
    pub width: f64,
    pub porous_height: f64,
    pub conduit_height: f64,
}

impl Default for StackedSquares {
    fn default() -> Self {
        StackedSquares { width: 1.0, porous_height: 1.0, conduit_height: 1.0 }
    }
}

/// Uniform right-diagonal mesh with `n` subdivisions per unit length.
pub fn build_structured_rect_mesh(n: usize, geometry: StackedSquares) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::Geometry(format!("need at least 2 subdivisions per unit, got {n}")));
    }
    let StackedSquares { width, porous_height, conduit_height } = geometry;
    if !(width > 0.0 && porous_height > 0.0 && conduit_height > 0.0) {
        return Err(Error::Geometry("rectangle extents must be positive".into()));
    }
    let cells = |len: f64| ((len * n as f64).round() as usize).max(1);
    let nx = cells(width);
    let nd = cells(porous_height);
    let nc = cells(conduit_height);
    let xs: Vec<f64> = (0..=nx).map(|i| width * i as f64 / nx as f64).collect();
    let mut ys: Vec<f64> = (0..=nd).map(|j| porous_height * j as f64 / nd as f64).collect();
    ys.extend((1..=nc).map(|j| porous_height + conduit_height * j as f64 / nc as f64));
    let top = porous_height + conduit_height;
    let (vertices, triangles, tags) = tensor_mesh(&xs, &ys, |c| {
        Some(if c[1] < porous_height { Subdomain::Porous } else { Subdomain::Conduit })
    });
    let tol = 1e-9;
    Mesh::from_parts(vertices, triangles, tags, |a, b, side| {
        let on_y = |y: f64| (a[1] - y).abs() < tol && (b[1] - y).abs() < tol;
        let on_x = |x: f64| (a[0] - x).abs() < tol && (b[0] - x).abs() < tol;
        if on_y(porous_height) {
            return Some(BoundaryLabel::Interface);
        }
        match side {
            Subdomain::Conduit if on_x(0.0) || on_x(width) || on_y(top) => Some(BoundaryLabel::ConduitWall),
            Subdomain::Porous if on_x(0.0) || on_x(width) || on_y(0.0) => Some(BoundaryLabel::PorousExterior(0)),
            _ => None,
        }
    })
}

/// Coordinates of the injection/production wellbore configuration: a left
/// injection well on top of the porous block, a horizontal open hole cut
/// into the block, and a right production well rising from the hole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellboreGeometry {
    pub width: f64,
    pub porous_height: f64,
    pub top: f64,
    pub left_well_width: f64,
    pub hole_x0: f64,
    pub hole_y0: f64,
    pub hole_y1: f64,
    pub right_well_x0: f64,
}

impl Default for WellboreGeometry {
    fn default() -> Self {
        WellboreGeometry {
            width: 6.0,
            porous_height: 3.0,
            top: 7.0,
            left_well_width: 0.25,
            hole_x0: 2.0,
            hole_y0: 1.38,
            hole_y1: 1.63,
            right_well_x0: 5.75,
        }
    }
}

impl WellboreGeometry {
    pub fn validate(&self) -> Result<()> {
        let g = self;
        let xs = [0.0, g.left_well_width, g.hole_x0, g.right_well_x0, g.width];
        let ys = [0.0, g.hole_y0, g.hole_y1, g.porous_height, g.top];
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&xs) {
            return Err(Error::Geometry(format!("x breakpoints must increase strictly: {xs:?}")));
        }
        if !increasing(&ys) {
            return Err(Error::Geometry(format!("y breakpoints must increase strictly: {ys:?}")));
        }
        Ok(())
    }

    pub fn subdomain_at(&self, c: Point) -> Option<Subdomain> {
        let g = self;
        let (x, y) = (c[0], c[1]);
        let left_well = x < g.left_well_width && y > g.porous_height && y < g.top;
        let hole = x > g.hole_x0 && x < g.width && y > g.hole_y0 && y < g.hole_y1;
        let right_well = x > g.right_well_x0 && x < g.width && y > g.hole_y1 && y < g.top;
        if left_well || hole || right_well {
            Some(Subdomain::Conduit)
        } else if x > 0.0 && x < g.width && y > 0.0 && y < g.porous_height {
            Some(Subdomain::Porous)
        } else {
            None
        }
    }

    /// Boundary label of the segment `[a, b]` seen from `side`.
    pub fn classify(&self, a: Point, b: Point, side: Subdomain) -> Option<BoundaryLabel> {
        let g = self;
        let tol = 1e-9;
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let horizontal = (a[1] - b[1]).abs() < tol;
        let vertical = (a[0] - b[0]).abs() < tol;
        let at = |v: f64, w: f64| (v - w).abs() < tol;
        let within = |v: f64, lo: f64, hi: f64| v > lo - tol && v < hi + tol;

        let interface = (horizontal && at(m[1], g.porous_height) && within(m[0], 0.0, g.left_well_width))
            || (horizontal && at(m[1], g.hole_y0) && within(m[0], g.hole_x0, g.width))
            || (vertical && at(m[0], g.hole_x0) && within(m[1], g.hole_y0, g.hole_y1))
            || (horizontal && at(m[1], g.hole_y1) && within(m[0], g.hole_x0, g.right_well_x0));
        if interface {
            return Some(BoundaryLabel::Interface);
        }
        match side {
            Subdomain::Conduit => {
                if horizontal && at(m[1], g.top) {
                    if m[0] < g.left_well_width {
                        Some(BoundaryLabel::ConduitInflow)
                    } else {
                        Some(BoundaryLabel::ConduitOutflow)
                    }
                } else {
                    Some(BoundaryLabel::ConduitWall)
                }
            }
            Subdomain::Porous => {
                let seg = if horizontal && at(m[1], 0.0) {
                    1
                } else if vertical && at(m[0], g.width) {
                    2
                } else if vertical && at(m[0], g.right_well_x0) {
                    3
                } else if horizontal && at(m[1], g.porous_height) {
                    4
                } else if vertical && at(m[0], 0.0) {
                    5
                } else {
                    return None;
                };
                Some(BoundaryLabel::PorousExterior(seg))
            }
        }
    }
}

/// Quasi-uniform mesh of the wellbore configuration with cell size at most `h_target`.
pub fn build_wellbore_mesh(h_target: f64, geometry: WellboreGeometry) -> Result<Mesh> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(Error::Geometry(format!("mesh size must be positive, got {h_target}")));
    }
    geometry.validate()?;
    let g = geometry;
    let xs = graded_axis(&[0.0, g.left_well_width, g.hole_x0, g.right_well_x0, g.width], h_target);
    let ys = graded_axis(&[0.0, g.hole_y0, g.hole_y1, g.porous_height, g.top], h_target);
    let (vertices, triangles, tags) = tensor_mesh(&xs, &ys, |c| g.subdomain_at(c));
    Mesh::from_parts(vertices, triangles, tags, |a, b, side| g.classify(a, b, side))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1(n: usize) -> Mesh {
        build_structured_rect_mesh(n, StackedSquares::default()).unwrap()
    }

    #[test]
    fn rect_mesh_counts() {
        let m = ex1(4);
        assert_eq!(m.triangles.len(), 64);
        assert_eq!(m.interface_edges.len(), 4);
        assert!((m.h_global - 2f64.sqrt() / 4.0).abs() < 1e-14);
    }

    #[test]
    fn interface_normals_point_up() {
        let m = ex1(4);
        for &e in &m.interface_edges {
            let n = m.edges[e].normal;
            assert!((n[0]).abs() < 1e-15 && (n[1] - 1.0).abs() < 1e-15);
            let c = m.edge_owner(e, Subdomain::Conduit).unwrap();
            let d = m.edge_owner(e, Subdomain::Porous).unwrap();
            assert!(m.geom(c).centroid()[1] > 1.0);
            assert!(m.geom(d).centroid()[1] < 1.0);
        }
    }

    #[test]
    fn interface_edge_length() {
        let m = ex1(8);
        for &e in &m.interface_edges {
            assert!((m.edges[e].length - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_coarse_n() {
        assert!(matches!(build_structured_rect_mesh(1, StackedSquares::default()), Err(Error::Geometry(_))));
    }

    #[test]
    fn areas_and_adjacency() {
        for m in [ex1(5), build_wellbore_mesh(0.25, WellboreGeometry::default()).unwrap()] {
            for (t, te) in m.triangle_edges.iter().enumerate() {
                assert!(m.geom(t).area > 0.0);
                for &e in te {
                    assert!(m.edges[e].triangles.contains(&Some(t)));
                }
            }
            for (e, edge) in m.edges.iter().enumerate() {
                for t in edge.triangles.iter().flatten() {
                    assert!(m.triangle_edges[*t].contains(&e));
                }
            }
        }
        let m = ex1(5);
        assert!((m.area(Subdomain::Conduit) - 1.0).abs() < 1e-12);
        assert!((m.area(Subdomain::Porous) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wellbore_areas_and_interface() {
        let g = WellboreGeometry::default();
        let m = build_wellbore_mesh(0.25, g).unwrap();
        let conduit = 0.25 * 4.0 + 4.0 * 0.25 + 0.25 * (7.0 - 1.63);
        let porous = 18.0 - 4.0 * 0.25 - 0.25 * (3.0 - 1.63);
        assert!((m.area(Subdomain::Conduit) - conduit).abs() < 1e-12);
        assert!((m.area(Subdomain::Porous) - porous).abs() < 1e-12);
        assert!(!m.interface_edges.is_empty());
        for &e in &m.interface_edges {
            let edge = &m.edges[e];
            assert_eq!(g.classify(m.vertices[edge.vertices[0]], m.vertices[edge.vertices[1]], Subdomain::Porous),
                Some(BoundaryLabel::Interface));
            assert!(m.edge_owner(e, Subdomain::Conduit).is_some());
            assert!(m.edge_owner(e, Subdomain::Porous).is_some());
        }
        let total_len: f64 = m.interface_edges.iter().map(|&e| m.edges[e].length).sum();
        assert!((total_len - (0.25 + 4.0 + 0.25 + 3.75)).abs() < 1e-12);
    }

    #[test]
    fn wellbore_rejects_overlap() {
        let g = WellboreGeometry { hole_y1: 1.2, ..Default::default() };
        assert!(matches!(build_wellbore_mesh(0.25, g), Err(Error::Geometry(_))));
    }

    #[test]
    fn centroid_with_hint() {
        let m = ex1(4);
        let c = m.geom(17).centroid();
        let side = m.tags[17];
        let loc = m.locate_point(side, c, Some(17)).unwrap();
        assert_eq!(loc.element, 17);
        for l in loc.bary {
            assert!((l - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn shared_vertex_picks_lowest_owner() {
        let m = ex1(4);
        let x = [0.5, 1.5];
        let loc = m.locate_point(Subdomain::Conduit, x, None).unwrap();
        let owners: Vec<usize> = m
            .triangles_in(Subdomain::Conduit)
            .iter()
            .copied()
            .filter(|&t| m.triangles[t].iter().any(|&v| m.vertices[v] == x))
            .collect();
        assert_eq!(loc.element, owners[0]);
        assert!(loc.bary.iter().any(|&l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn walk_clamps_at_wall() {
        let m = ex1(4);
        let start = m.locate_point(Subdomain::Conduit, [0.1, 1.5], None).unwrap().element;
        let end = m.walk_segment(start, [0.1, 1.5], [-0.3, 1.5]);
        assert!(end.clamped);
        assert!(end.point[0].abs() < 1e-12 && (end.point[1] - 1.5).abs() < 1e-12);
        let end = m.walk_segment(start, [0.1, 1.5], [0.1, 0.7]);
        assert!(end.clamped);
        assert!((end.point[1] - 1.0).abs() < 1e-12);
        assert_eq!(m.tags[end.element], Subdomain::Conduit);
    }
}
