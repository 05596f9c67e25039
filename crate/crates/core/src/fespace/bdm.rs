//! Lowest-order Brezzi-Douglas-Marini element.
//!
//! The six degrees of freedom of a triangle are the normal moments
//! `int_e v.n_e ds` and `int_e v.n_e s ds` on each edge, where `n_e` is the
//! mesh-wide reference normal of the edge and `s` runs from -1 at its lower
//! vertex to +1 at its higher vertex. Because the functionals are defined
//! per edge rather than per element, neighboring elements share them and the
//! normal trace is single-valued by construction.

use crate::mesh::{Mesh, Point};

/// Per-element shape functions expressed in the scaled monomial basis
/// `(1,0), (X,0), (Y,0), (0,1), (0,X), (0,Y)` with `X = (x - c) / s`.
#[derive(Clone, Debug)]
pub struct BdmElement {
    pub center: Point,
    pub scale: f64,
    /// `coeffs[m][p]`: coefficient of monomial `p` in shape `m`.
    pub coeffs: [[f64; 6]; 6],
}

/// Vector values and divergences of the six shapes at one point.
#[derive(Clone, Copy, Debug)]
pub struct BdmValues {
    pub vel: [Point; 6],
    pub div: [f64; 6],
}

fn monomials(center: Point, scale: f64, x: Point) -> [Point; 6] {
    let xx = (x[0] - center[0]) / scale;
    let yy = (x[1] - center[1]) / scale;
    [[1.0, 0.0], [xx, 0.0], [yy, 0.0], [0.0, 1.0], [0.0, xx], [0.0, yy]]
}

/// Signed edge parameter of `x` (assumed on the edge) in `[-1, 1]`.
pub fn edge_parameter(mesh: &Mesh, e: usize, x: Point) -> f64 {
    let edge = &mesh.edges[e];
    let a = mesh.vertices[edge.vertices[0]];
    let b = mesh.vertices[edge.vertices[1]];
    let t = [(b[0] - a[0]) / edge.length, (b[1] - a[1]) / edge.length];
    let along = (x[0] - a[0]) * t[0] + (x[1] - a[1]) * t[1];
    2.0 * along / edge.length - 1.0
}

impl BdmElement {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let g = mesh.geom(t);
        let center = g.centroid();
        let scale = g.diameter();
        // Functional matrix F[k][p] = N_k(P_p); 2-point Gauss is exact for
        // the linear-times-linear integrands.
        let gp = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let mut f = [[0.0; 6]; 6];
        for i in 0..3 {
            let e = mesh.triangle_edges[t][i];
            let edge = &mesh.edges[e];
            let a = mesh.vertices[edge.vertices[0]];
            let b = mesh.vertices[edge.vertices[1]];
            for &u in &gp {
                let x = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
                let s = 2.0 * u - 1.0;
                let w = 0.5 * edge.length;
                let m = monomials(center, scale, x);
                for p in 0..6 {
                    let flux = m[p][0] * edge.normal[0] + m[p][1] * edge.normal[1];
                    f[2 * i][p] += w * flux;
                    f[2 * i + 1][p] += w * flux * s;
                }
            }
        }
        let inv = invert6(f);
        // basis_m = sum_p inv[p][m] P_p
        let mut coeffs = [[0.0; 6]; 6];
        for m in 0..6 {
            for p in 0..6 {
                coeffs[m][p] = inv[p][m];
            }
        }
        BdmElement { center, scale, coeffs }
    }

    pub fn eval(&self, x: Point) -> BdmValues {
        let m = monomials(self.center, self.scale, x);
        let dm = [0.0, 1.0 / self.scale, 0.0, 0.0, 0.0, 1.0 / self.scale];
        let mut vel = [[0.0; 2]; 6];
        let mut div = [0.0; 6];
        for k in 0..6 {
            let c = &self.coeffs[k];
            for p in 0..6 {
                vel[k][0] += c[p] * m[p][0];
                vel[k][1] += c[p] * m[p][1];
                div[k] += c[p] * dm[p];
            }
        }
        BdmValues { vel, div }
    }
}

/// Dense 6x6 inverse by Gauss-Jordan elimination with partial pivoting.
fn invert6(mut a: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let piv = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular BDM functional matrix");
        for k in 0..6 {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..6 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..6 {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    inv
}

/// Canonical interpolant on one element: the six edge moments of `v`.
pub fn edge_moments(mesh: &Mesh, e: usize, rule: &crate::quadrature::LineRule, v: impl Fn(Point) -> Point) -> [f64; 2] {
    let edge = &mesh.edges[e];
    let a = mesh.vertices[edge.vertices[0]];
    let b = mesh.vertices[edge.vertices[1]];
    let mut out = [0.0; 2];
    for (&u, &w) in rule.points.iter().zip(&rule.weights) {
        let x = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
        let val = v(x);
        let flux = val[0] * edge.normal[0] + val[1] * edge.normal[1];
        out[0] += w * edge.length * flux;
        out[1] += w * edge.length * flux * (2.0 * u - 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_rect_mesh, StackedSquares, Subdomain};
    use crate::quadrature::make_line_rule;

    fn interpolate(mesh: &Mesh, t: usize, v: impl Fn(Point) -> Point + Copy) -> (BdmElement, [f64; 6]) {
        let el = BdmElement::new(mesh, t);
        let rule = make_line_rule(6).unwrap();
        let mut c = [0.0; 6];
        for i in 0..3 {
            let m = edge_moments(mesh, mesh.triangle_edges[t][i], &rule, v);
            c[2 * i] = m[0];
            c[2 * i + 1] = m[1];
        }
        (el, c)
    }

    fn combine(vals: &BdmValues, c: &[f64; 6]) -> (Point, f64) {
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for k in 0..6 {
            v[0] += c[k] * vals.vel[k][0];
            v[1] += c[k] * vals.vel[k][1];
            d += c[k] * vals.div[k];
        }
        (v, d)
    }

    #[test]
    fn reproduces_linear_fields() {
        let mesh = build_structured_rect_mesh(3, StackedSquares::default()).unwrap();
        let fields: [fn(Point) -> Point; 3] = [|_| [1.0, 0.0], |x| [x[0], -x[1]], |x| [2.0 * x[1] - 0.5, x[0] + 3.0 * x[1]]];
        for &t in mesh.triangles_in(Subdomain::Porous) {
            for f in fields {
                let (el, c) = interpolate(&mesh, t, f);
                let g = mesh.geom(t);
                for b in [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1], [1.0 / 3.0; 3]] {
                    let x = g.point(b);
                    let (v, _) = combine(&el.eval(x), &c);
                    let e = f(x);
                    assert!((v[0] - e[0]).abs() < 1e-13 && (v[1] - e[1]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn divergence_of_interpolant() {
        let mesh = build_structured_rect_mesh(3, StackedSquares::default()).unwrap();
        for &t in mesh.triangles_in(Subdomain::Porous) {
            let (el, c) = interpolate(&mesh, t, |x| [x[0], -x[1]]);
            let (_, d) = combine(&el.eval(mesh.geom(t).centroid()), &c);
            assert!(d.abs() < 1e-13);
            let (el, c) = interpolate(&mesh, t, |x| [3.0 * x[0] + x[1], 2.0 * x[1]]);
            let (_, d) = combine(&el.eval(mesh.geom(t).centroid()), &c);
            assert!((d - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn functionals_are_dual() {
        let mesh = build_structured_rect_mesh(2, StackedSquares::default()).unwrap();
        let rule = make_line_rule(4).unwrap();
        let t = mesh.triangles_in(Subdomain::Porous)[3];
        let el = BdmElement::new(&mesh, t);
        for m in 0..6 {
            for i in 0..3 {
                let mom = edge_moments(&mesh, mesh.triangle_edges[t][i], &rule, |x| el.eval(x).vel[m]);
                for j in 0..2 {
                    let expect = if m == 2 * i + j { 1.0 } else { 0.0 };
                    assert!((mom[j] - expect).abs() < 1e-13);
                }
            }
        }
    }
}
