//! Discrete spaces: MINI on the conduit, BDM1 x P0 on the porous block.

pub mod bdm;
pub mod mini;
pub mod projection;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, Subdomain};
use crate::quadrature::RuleSet;

pub use bdm::{BdmElement, BdmValues};
pub use mini::{eval_mini_basis, MiniValues};
pub use projection::{l2_project, Analytic};

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceId {
    /// Two MINI components, component-major.
    ConduitVelocity,
    /// Continuous P1 on the conduit.
    ConduitPressure,
    /// BDM1 on the porous block (shared by fracture and matrix velocities).
    Bdm1,
    /// Piecewise constants on the porous block.
    P0,
}

impl SpaceId {
    pub fn subdomain(self) -> Subdomain {
        match self {
            SpaceId::ConduitVelocity | SpaceId::ConduitPressure => Subdomain::Conduit,
            SpaceId::Bdm1 | SpaceId::P0 => Subdomain::Porous,
        }
    }
}

/// Global numbering of every space.
///
/// Conduit velocity: component `c` of vertex dof `v` sits at
/// `c * n_scalar + v`, the bubble of conduit triangle `k` at
/// `c * n_scalar + n_vertices + k`. BDM1 moments of porous edge `e` sit at
/// `2e` (mean flux) and `2e + 1` (first moment).
#[derive(Clone, Debug)]
pub struct DofMaps {
    /// Global vertex id of each conduit vertex dof.
    pub conduit_vertices: Vec<usize>,
    /// Global triangle id of each conduit triangle (bubble order).
    pub conduit_triangles: Vec<usize>,
    /// Global edge id of each porous edge.
    pub porous_edges: Vec<usize>,
    /// Global triangle id of each porous triangle (P0 order).
    pub porous_triangles: Vec<usize>,
    vertex_to_conduit: Vec<usize>,
    tri_to_local: Vec<usize>,
    edge_to_porous: Vec<usize>,
}

impl DofMaps {
    pub fn new(mesh: &Mesh) -> Self {
        let mut vertex_to_conduit = vec![NONE; mesh.vertices.len()];
        let mut conduit_vertices = Vec::new();
        let mut tri_to_local = vec![NONE; mesh.triangles.len()];
        let conduit_triangles = mesh.triangles_in(Subdomain::Conduit).to_vec();
        for (k, &t) in conduit_triangles.iter().enumerate() {
            tri_to_local[t] = k;
            for &v in &mesh.triangles[t] {
                if vertex_to_conduit[v] == NONE {
                    vertex_to_conduit[v] = conduit_vertices.len();
                    conduit_vertices.push(v);
                }
            }
        }
        let porous_triangles = mesh.triangles_in(Subdomain::Porous).to_vec();
        let mut edge_to_porous = vec![NONE; mesh.edges.len()];
        let mut porous_edges = Vec::new();
        for (k, &t) in porous_triangles.iter().enumerate() {
            tri_to_local[t] = k;
            for &e in &mesh.triangle_edges[t] {
                if edge_to_porous[e] == NONE {
                    edge_to_porous[e] = porous_edges.len();
                    porous_edges.push(e);
                }
            }
        }
        DofMaps {
            conduit_vertices,
            conduit_triangles,
            porous_edges,
            porous_triangles,
            vertex_to_conduit,
            tri_to_local,
            edge_to_porous,
        }
    }

    /// Scalar MINI dofs per component.
    pub fn n_scalar(&self) -> usize {
        self.conduit_vertices.len() + self.conduit_triangles.len()
    }

    pub fn count(&self, space: SpaceId) -> usize {
        match space {
            SpaceId::ConduitVelocity => 2 * self.n_scalar(),
            SpaceId::ConduitPressure => self.conduit_vertices.len(),
            SpaceId::Bdm1 => 2 * self.porous_edges.len(),
            SpaceId::P0 => self.porous_triangles.len(),
        }
    }

    /// Index of a triangle within its own subdomain's list.
    pub fn local_triangle(&self, t: usize) -> usize {
        self.tri_to_local[t]
    }

    pub fn conduit_vertex(&self, v: usize) -> Option<usize> {
        let k = self.vertex_to_conduit[v];
        (k != NONE).then_some(k)
    }

    pub fn porous_edge(&self, e: usize) -> Option<usize> {
        let k = self.edge_to_porous[e];
        (k != NONE).then_some(k)
    }

    /// Scalar MINI dofs `[v0, v1, v2, bubble]` of a conduit triangle; add
    /// `n_scalar()` for the second component.
    pub fn mini_scalar_dofs(&self, mesh: &Mesh, t: usize) -> [usize; 4] {
        let tri = mesh.triangles[t];
        [
            self.vertex_to_conduit[tri[0]],
            self.vertex_to_conduit[tri[1]],
            self.vertex_to_conduit[tri[2]],
            self.conduit_vertices.len() + self.tri_to_local[t],
        ]
    }

    pub fn pressure_dofs(&self, mesh: &Mesh, t: usize) -> [usize; 3] {
        let tri = mesh.triangles[t];
        tri.map(|v| self.vertex_to_conduit[v])
    }

    /// BDM1 dofs of a porous triangle: `2i + j` is moment `j` on local edge `i`.
    pub fn bdm_dofs(&self, mesh: &Mesh, t: usize) -> [usize; 6] {
        let te = mesh.triangle_edges[t];
        let mut out = [0; 6];
        for i in 0..3 {
            let k = self.edge_to_porous[te[i]];
            out[2 * i] = 2 * k;
            out[2 * i + 1] = 2 * k + 1;
        }
        out
    }

    pub fn p0_dof(&self, t: usize) -> usize {
        self.tri_to_local[t]
    }

    /// +1 if the reference normal of local edge `i` of `t` points out of
    /// `t`, -1 otherwise. Neighbors sharing an edge get opposite signs.
    pub fn orientation(&self, mesh: &Mesh, t: usize, i: usize) -> f64 {
        let n = mesh.edges[mesh.triangle_edges[t][i]].normal;
        let o = mesh.outward_normal(t, i);
        if n[0] * o[0] + n[1] * o[1] > 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Mesh together with dof numbering, element data, and quadrature rules.
#[derive(Clone, Debug)]
pub struct FeSpaces {
    pub mesh: Mesh,
    pub dofs: DofMaps,
    /// BDM1 element data in porous-triangle order.
    pub bdm: Vec<BdmElement>,
    pub rules: RuleSet,
}

/// Coefficients of one discrete field with its time label.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldHandle {
    pub space: SpaceId,
    pub coeffs: Vec<f64>,
    pub time: f64,
}

impl FieldHandle {
    pub fn zeros(spaces: &FeSpaces, space: SpaceId, time: f64) -> Self {
        FieldHandle { space, coeffs: vec![0.0; spaces.dofs.count(space)], time }
    }

    pub fn scaled(&self, c: f64) -> Self {
        FieldHandle { space: self.space, coeffs: self.coeffs.iter().map(|v| c * v).collect(), time: self.time }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldValue {
    Scalar(f64),
    Vector(Point),
    VectorDiv(Point, f64),
}

impl FeSpaces {
    pub fn new(mesh: Mesh) -> Self {
        let dofs = DofMaps::new(&mesh);
        let bdm = dofs.porous_triangles.iter().map(|&t| BdmElement::new(&mesh, t)).collect();
        FeSpaces { mesh, dofs, bdm, rules: RuleSet::standard() }
    }

    pub fn bdm_element(&self, t: usize) -> &BdmElement {
        &self.bdm[self.dofs.local_triangle(t)]
    }

    /// Velocity and gradient `grad[c][d] = d u_c / d x_d` of a MINI field.
    pub fn conduit_velocity(&self, coeffs: &[f64], t: usize, bary: [f64; 3]) -> (Point, [Point; 2]) {
        let vals = eval_mini_basis(self.mesh.geom(t), bary);
        let d = self.dofs.mini_scalar_dofs(&self.mesh, t);
        let ns = self.dofs.n_scalar();
        let mut u = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for c in 0..2 {
            for k in 0..4 {
                let a = coeffs[c * ns + d[k]];
                u[c] += a * vals.vel[k];
                g[c][0] += a * vals.vel_grad[k][0];
                g[c][1] += a * vals.vel_grad[k][1];
            }
        }
        (u, g)
    }

    pub fn conduit_pressure(&self, coeffs: &[f64], t: usize, bary: [f64; 3]) -> f64 {
        let d = self.dofs.pressure_dofs(&self.mesh, t);
        (0..3).map(|k| coeffs[d[k]] * bary[k]).sum()
    }

    /// Value and divergence of a BDM1 field at a physical point of `t`.
    pub fn bdm_value(&self, coeffs: &[f64], t: usize, x: Point) -> (Point, f64) {
        let vals = self.bdm_element(t).eval(x);
        let d = self.dofs.bdm_dofs(&self.mesh, t);
        let mut v = [0.0; 2];
        let mut div = 0.0;
        for k in 0..6 {
            let a = coeffs[d[k]];
            v[0] += a * vals.vel[k][0];
            v[1] += a * vals.vel[k][1];
            div += a * vals.div[k];
        }
        (v, div)
    }

    pub fn p0_value(&self, coeffs: &[f64], t: usize) -> f64 {
        coeffs[self.dofs.p0_dof(t)]
    }
}

/// Evaluates `handle` at the physical point `x` of element `t`.
pub fn evaluate_field(spaces: &FeSpaces, handle: &FieldHandle, t: usize, x: Point) -> Result<FieldValue> {
    let expected = handle.space.subdomain();
    let actual = *spaces
        .mesh
        .tags
        .get(t)
        .ok_or_else(|| Error::Mesh(format!("element {t} does not exist")))?;
    if actual != expected {
        return Err(Error::SubdomainMismatch { element: t, expected, actual });
    }
    if handle.coeffs.len() != spaces.dofs.count(handle.space) {
        return Err(Error::Dimension(format!(
            "{:?} field has {} coefficients, space has {}",
            handle.space,
            handle.coeffs.len(),
            spaces.dofs.count(handle.space)
        )));
    }
    let bary = spaces.mesh.geom(t).barycentric(x);
    Ok(match handle.space {
        SpaceId::ConduitVelocity => FieldValue::Vector(spaces.conduit_velocity(&handle.coeffs, t, bary).0),
        SpaceId::ConduitPressure => FieldValue::Scalar(spaces.conduit_pressure(&handle.coeffs, t, bary)),
        SpaceId::Bdm1 => {
            let (v, d) = spaces.bdm_value(&handle.coeffs, t, x);
            FieldValue::VectorDiv(v, d)
        }
        SpaceId::P0 => FieldValue::Scalar(spaces.p0_value(&handle.coeffs, t)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_rect_mesh, StackedSquares};

    fn spaces(n: usize) -> FeSpaces {
        FeSpaces::new(build_structured_rect_mesh(n, StackedSquares::default()).unwrap())
    }

    #[test]
    fn dof_counts() {
        let s = spaces(4);
        assert_eq!(s.dofs.count(SpaceId::P0), 32);
        assert_eq!(s.dofs.count(SpaceId::ConduitPressure), 25);
        assert_eq!(s.dofs.count(SpaceId::ConduitVelocity), 2 * (25 + 32));
        // 3 * 16 horizontal-ish/vertical/diagonal cell edges + 4 top + 4 right
        assert_eq!(s.dofs.count(SpaceId::Bdm1), 2 * (3 * 16 + 8));
    }

    #[test]
    fn shared_edges_have_opposite_orientation() {
        let s = spaces(4);
        for (e, edge) in s.mesh.edges.iter().enumerate() {
            if let [Some(a), Some(b)] = edge.triangles {
                if s.mesh.tags[a] == s.mesh.tags[b] {
                    let ia = s.mesh.local_edge(a, e).unwrap();
                    let ib = s.mesh.local_edge(b, e).unwrap();
                    assert_eq!(s.dofs.orientation(&s.mesh, a, ia), -s.dofs.orientation(&s.mesh, b, ib));
                }
            }
        }
    }

    #[test]
    fn subdomain_mismatch() {
        let s = spaces(2);
        let h = FieldHandle::zeros(&s, SpaceId::P0, 0.0);
        let t = s.mesh.triangles_in(Subdomain::Conduit)[0];
        let x = s.mesh.geom(t).centroid();
        assert!(matches!(evaluate_field(&s, &h, t, x), Err(Error::SubdomainMismatch { .. })));
    }

    #[test]
    fn zero_and_unit_coefficients() {
        let s = spaces(3);
        let t = s.mesh.triangles_in(Subdomain::Conduit)[4];
        let b = [0.2, 0.5, 0.3];
        let x = s.mesh.geom(t).point(b);
        let mut h = FieldHandle::zeros(&s, SpaceId::ConduitVelocity, 0.0);
        assert_eq!(evaluate_field(&s, &h, t, x).unwrap(), FieldValue::Vector([0.0, 0.0]));
        let d = s.dofs.mini_scalar_dofs(&s.mesh, t);
        h.coeffs[s.dofs.n_scalar() + d[3]] = 1.0;
        let expect = eval_mini_basis(s.mesh.geom(t), b).vel[3];
        match evaluate_field(&s, &h, t, x).unwrap() {
            FieldValue::Vector(v) => assert!(v[0] == 0.0 && (v[1] - expect).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bdm_normal_trace_is_continuous() {
        let s = spaces(4);
        let mut state = 12345u64;
        let coeffs: Vec<f64> = (0..s.dofs.count(SpaceId::Bdm1))
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect();
        let rule = &s.rules.edge;
        let mut checked = 0;
        for edge in &s.mesh.edges {
            let [Some(a), Some(b)] = edge.triangles else { continue };
            if s.mesh.tags[a] != Subdomain::Porous || s.mesh.tags[b] != Subdomain::Porous {
                continue;
            }
            let p = s.mesh.vertices[edge.vertices[0]];
            let q = s.mesh.vertices[edge.vertices[1]];
            for &u in &rule.points {
                let x = [p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])];
                let va = s.bdm_value(&coeffs, a, x).0;
                let vb = s.bdm_value(&coeffs, b, x).0;
                let jump = (va[0] - vb[0]) * edge.normal[0] + (va[1] - vb[1]) * edge.normal[1];
                assert!(jump.abs() < 1e-13, "jump {jump}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn dense_basis_sum_agrees() {
        let s = spaces(3);
        let n = s.dofs.count(SpaceId::Bdm1);
        let coeffs: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) / 11.0 - 0.4).collect();
        let h = FieldHandle { space: SpaceId::Bdm1, coeffs: coeffs.clone(), time: 0.0 };
        for &t in s.mesh.triangles_in(Subdomain::Porous) {
            let x = s.mesh.geom(t).point([0.1, 0.3, 0.6]);
            let vals = s.bdm_element(t).eval(x);
            let d = s.dofs.bdm_dofs(&s.mesh, t);
            let mut v = [0.0; 2];
            let mut div = 0.0;
            for k in 0..6 {
                v[0] += coeffs[d[k]] * vals.vel[k][0];
                v[1] += coeffs[d[k]] * vals.vel[k][1];
                div += coeffs[d[k]] * vals.div[k];
            }
            match evaluate_field(&s, &h, t, x).unwrap() {
                FieldValue::VectorDiv(w, dv) => {
                    assert!((w[0] - v[0]).abs() < 1e-14 && (w[1] - v[1]).abs() < 1e-14 && (dv - div).abs() < 1e-12)
                }
                other => panic!("{other:?}"),
            }
        }
    }
}
