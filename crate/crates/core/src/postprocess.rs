//! Error norms, convergence-rate tables, the discrete energy monitor,
//! boundary fluxes and legacy VTK export.

use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::PhysParams;
use crate::error::{Error, Result};
use crate::fespace::{Analytic, FeSpaces, FieldHandle, SpaceId};
use crate::mesh::{BoundaryLabel, Point, Subdomain};
use crate::mms::ExactSolution;
use crate::stepper::{PhaseTimes, State};

/// One number per unknown field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldErrors {
    pub u_c: f64,
    pub grad_u_c: f64,
    pub p_c: f64,
    pub u_f: f64,
    pub u_m: f64,
    pub phi_f: f64,
    pub phi_m: f64,
}

impl FieldErrors {
    pub const NAMES: [&'static str; 7] = ["u_c", "grad_u_c", "p_c", "u_f", "u_m", "phi_f", "phi_m"];

    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("u_c", self.u_c),
            ("grad_u_c", self.grad_u_c),
            ("p_c", self.p_c),
            ("u_f", self.u_f),
            ("u_m", self.u_m),
            ("phi_f", self.phi_f),
            ("phi_m", self.phi_m),
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    /// Entry-wise maximum.
    pub fn max(&self, other: &FieldErrors) -> FieldErrors {
        FieldErrors {
            u_c: self.u_c.max(other.u_c),
            grad_u_c: self.grad_u_c.max(other.grad_u_c),
            p_c: self.p_c.max(other.p_c),
            u_f: self.u_f.max(other.u_f),
            u_m: self.u_m.max(other.u_m),
            phi_f: self.phi_f.max(other.phi_f),
            phi_m: self.phi_m.max(other.phi_m),
        }
    }
}

/// Errors of one run, measured at `time`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub dt: f64,
    pub r: usize,
    pub time: f64,
    pub absolute: FieldErrors,
    pub relative: FieldErrors,
    /// Largest absolute errors over all macro time levels, when tracked.
    pub max_in_time: Option<FieldErrors>,
    pub timings: PhaseTimes,
}

fn field_value(spaces: &FeSpaces, h: &FieldHandle, t: usize, bary: [f64; 3], x: Point) -> [f64; 2] {
    match h.space {
        SpaceId::ConduitVelocity => spaces.conduit_velocity(&h.coeffs, t, bary).0,
        SpaceId::ConduitPressure => [spaces.conduit_pressure(&h.coeffs, t, bary), 0.0],
        SpaceId::Bdm1 => spaces.bdm_value(&h.coeffs, t, x).0,
        SpaceId::P0 => [spaces.p0_value(&h.coeffs, t), 0.0],
    }
}

fn check_len(spaces: &FeSpaces, h: &FieldHandle) -> Result<()> {
    let n = spaces.dofs.count(h.space);
    if h.coeffs.len() != n {
        return Err(Error::Dimension(format!("{:?} field has {} coefficients, expected {n}", h.space, h.coeffs.len())));
    }
    Ok(())
}

/// `||h - exact||_0` over the subdomain of `h` (plain norm without `exact`).
pub fn l2_error(spaces: &FeSpaces, h: &FieldHandle, exact: Option<Analytic>) -> Result<f64> {
    check_len(spaces, h)?;
    let rule = &spaces.rules.error;
    let mut sum = 0.0;
    for &t in spaces.mesh.triangles_in(h.space.subdomain()) {
        let g = spaces.mesh.geom(t);
        let mut local = 0.0;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = g.point(*b);
            let v = field_value(spaces, h, t, *b, x);
            let e = match exact {
                None => [0.0, 0.0],
                Some(Analytic::Scalar(f)) => [f(x), 0.0],
                Some(Analytic::Vector(f)) => f(x),
            };
            local += w * ((v[0] - e[0]).powi(2) + (v[1] - e[1]).powi(2));
        }
        sum += 2.0 * g.area * local;
    }
    Ok(sum.sqrt())
}

/// `||exact||_0` over one subdomain.
pub fn exact_norm(spaces: &FeSpaces, side: Subdomain, exact: Analytic) -> f64 {
    let rule = &spaces.rules.error;
    let mut sum = 0.0;
    for &t in spaces.mesh.triangles_in(side) {
        let g = spaces.mesh.geom(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = g.point(*b);
            let e = match exact {
                Analytic::Scalar(f) => [f(x), 0.0],
                Analytic::Vector(f) => f(x),
            };
            sum += 2.0 * g.area * w * (e[0] * e[0] + e[1] * e[1]);
        }
    }
    sum.sqrt()
}

/// `||grad(u_h - u)||_0` on the conduit; `exact` returns `grad[c][d] = d u_c / d x_d`.
pub fn h1_seminorm_error(spaces: &FeSpaces, u: &FieldHandle, exact: Option<&dyn Fn(Point) -> [Point; 2]>) -> Result<f64> {
    if u.space != SpaceId::ConduitVelocity {
        return Err(Error::Parameter(format!("H1 seminorm needs a conduit velocity, got {:?}", u.space)));
    }
    check_len(spaces, u)?;
    let rule = if exact.is_some() { &spaces.rules.error } else { &spaces.rules.assembly };
    let mut sum = 0.0;
    for &t in spaces.mesh.triangles_in(Subdomain::Conduit) {
        let g = spaces.mesh.geom(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let (_, gu) = spaces.conduit_velocity(&u.coeffs, t, *b);
            let ge = exact.map_or([[0.0; 2]; 2], |f| f(g.point(*b)));
            let mut s = 0.0;
            for c in 0..2 {
                for d in 0..2 {
                    s += (gu[c][d] - ge[c][d]).powi(2);
                }
            }
            sum += 2.0 * g.area * w * s;
        }
    }
    Ok(sum.sqrt())
}

fn grad_norm(spaces: &FeSpaces, side: Subdomain, f: &dyn Fn(Point) -> [Point; 2]) -> f64 {
    let rule = &spaces.rules.error;
    let mut sum = 0.0;
    for &t in spaces.mesh.triangles_in(side) {
        let g = spaces.mesh.geom(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let m = f(g.point(*b));
            sum += 2.0 * g.area * w * (m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2));
        }
    }
    sum.sqrt()
}

fn check_time(found: f64, expected: f64) -> Result<()> {
    if (found - expected).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(Error::TimeMismatch { expected, found });
    }
    Ok(())
}

/// Absolute and relative errors of every field at time `t`.
pub fn compute_errors(spaces: &FeSpaces, state: &State, exact: &dyn ExactSolution, t: f64) -> Result<ErrorReport> {
    for h in [&state.u_c, &state.p_c, &state.u_f, &state.phi_f, &state.u_m, &state.phi_m] {
        check_time(h.time, t)?;
    }
    let uc = |x: Point| exact.u_c(x, t);
    let guc = |x: Point| exact.grad_u_c(x, t);
    let pc = |x: Point| exact.p_c(x, t);
    let uf = |x: Point| exact.u_f(x, t);
    let um = |x: Point| exact.u_m(x, t);
    let pf = |x: Point| exact.phi_f(x, t);
    let pm = |x: Point| exact.phi_m(x, t);
    let absolute = FieldErrors {
        u_c: l2_error(spaces, &state.u_c, Some(Analytic::Vector(&uc)))?,
        grad_u_c: h1_seminorm_error(spaces, &state.u_c, Some(&guc))?,
        p_c: l2_error(spaces, &state.p_c, Some(Analytic::Scalar(&pc)))?,
        u_f: l2_error(spaces, &state.u_f, Some(Analytic::Vector(&uf)))?,
        u_m: l2_error(spaces, &state.u_m, Some(Analytic::Vector(&um)))?,
        phi_f: l2_error(spaces, &state.phi_f, Some(Analytic::Scalar(&pf)))?,
        phi_m: l2_error(spaces, &state.phi_m, Some(Analytic::Scalar(&pm)))?,
    };
    let rel = |e: f64, n: f64| if n > 0.0 { e / n } else { e };
    let relative = FieldErrors {
        u_c: rel(absolute.u_c, exact_norm(spaces, Subdomain::Conduit, Analytic::Vector(&uc))),
        grad_u_c: rel(absolute.grad_u_c, grad_norm(spaces, Subdomain::Conduit, &guc)),
        p_c: rel(absolute.p_c, exact_norm(spaces, Subdomain::Conduit, Analytic::Scalar(&pc))),
        u_f: rel(absolute.u_f, exact_norm(spaces, Subdomain::Porous, Analytic::Vector(&uf))),
        u_m: rel(absolute.u_m, exact_norm(spaces, Subdomain::Porous, Analytic::Vector(&um))),
        phi_f: rel(absolute.phi_f, exact_norm(spaces, Subdomain::Porous, Analytic::Scalar(&pf))),
        phi_m: rel(absolute.phi_m, exact_norm(spaces, Subdomain::Porous, Analytic::Scalar(&pm))),
    };
    for (name, v) in absolute.entries().into_iter().chain(relative.entries()) {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} error")));
        }
    }
    Ok(ErrorReport { h: spaces.mesh.h_global, time: t, absolute, relative, ..Default::default() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub h: f64,
    pub field: String,
    pub error: f64,
    /// `None` on the coarsest mesh.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

/// `log2(e_i / e_{i+1})` for a sequence of halving mesh sizes.
pub fn compute_rates(hs: &[f64], errors: &[f64]) -> Result<Vec<Option<f64>>> {
    if hs.len() != errors.len() {
        return Err(Error::Dimension(format!("{} mesh sizes for {} errors", hs.len(), errors.len())));
    }
    for w in hs.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mesh sizes {} -> {} do not halve", w[0], w[1])));
        }
    }
    Ok((0..errors.len())
        .map(|i| (i > 0).then(|| (errors[i - 1] / errors[i]).log2()))
        .collect())
}

/// Rates of every field from reports ordered by decreasing `h`.
pub fn make_rate_table(runs: &[ErrorReport]) -> Result<RateTable> {
    let hs: Vec<f64> = runs.iter().map(|r| r.h).collect();
    let mut rows = Vec::new();
    for name in FieldErrors::NAMES {
        let errs: Vec<f64> = runs.iter().map(|r| r.absolute.get(name).unwrap_or(f64::NAN)).collect();
        let rates = compute_rates(&hs, &errs)?;
        for ((h, e), rate) in hs.iter().zip(&errs).zip(rates) {
            rows.push(RateRow { h: *h, field: name.to_string(), error: *e, rate });
        }
    }
    Ok(RateTable { rows })
}

impl RateTable {
    /// Rate on the finest mesh for `field`.
    pub fn last_rate(&self, field: &str) -> Option<f64> {
        self.rows.iter().filter(|r| r.field == field).last().and_then(|r| r.rate)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,field,error,rate\n");
        for r in &self.rows {
            let rate = r.rate.map_or("--".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(s, "{},{},{:.6e},{}", r.h, r.field, r.error, rate);
        }
        s
    }
}

/// Summands of the discrete stability bound. The first three are evaluated
/// at the current time; the rest are running sums over completed steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyComponents {
    pub u_c: f64,
    pub phi_f: f64,
    pub phi_m: f64,
    /// `sum dt ||grad u_c||^2`
    pub grad_u_c: f64,
    /// `sum ds ||u_f||^2`
    pub u_f: f64,
    /// `sum ds ||u_m||^2`
    pub u_m: f64,
    /// `sum ds gamma/(rho h) ||(S - u_f) . n||^2_I`
    pub interface_jump: f64,
}

impl EnergyComponents {
    pub fn total(&self) -> f64 {
        self.u_c + self.phi_f + self.phi_m + self.grad_u_c + self.u_f + self.u_m + self.interface_jump
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

/// Squared L2 norm of a field.
pub fn norm_sq(spaces: &FeSpaces, h: &FieldHandle) -> Result<f64> {
    l2_error(spaces, h, None).map(|v| v * v)
}

/// `||grad u||^2` for a conduit velocity, exact for the MINI space.
pub fn grad_sq(spaces: &FeSpaces, u: &FieldHandle) -> Result<f64> {
    h1_seminorm_error(spaces, u, None).map(|v| v * v)
}

/// `sum_E gamma/(rho h_E) ||(s - u_f) . n_d||^2_E` over interface edges.
pub fn interface_jump_sq(spaces: &FeSpaces, params: &PhysParams, s: &FieldHandle, u_f: &FieldHandle) -> f64 {
    let mesh = &spaces.mesh;
    let rule = &spaces.rules.edge;
    let mut sum = 0.0;
    for &e in &mesh.interface_edges {
        let edge = &mesh.edges[e];
        let tc = mesh.edge_owner(e, Subdomain::Conduit).expect("interface edge without conduit owner");
        let td = mesh.edge_owner(e, Subdomain::Porous).expect("interface edge without porous owner");
        let a = mesh.vertices[edge.vertices[0]];
        let b = mesh.vertices[edge.vertices[1]];
        let g = mesh.geom(tc);
        for (u, w) in rule.points.iter().zip(&rule.weights) {
            let x = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
            let (sv, _) = spaces.conduit_velocity(&s.coeffs, tc, g.barycentric(x));
            let (fv, _) = spaces.bdm_value(&u_f.coeffs, td, x);
            let j = (sv[0] - fv[0]) * edge.normal[0] + (sv[1] - fv[1]) * edge.normal[1];
            sum += w * edge.length * params.penalty(edge.length) * j * j;
        }
    }
    sum
}

/// Energy components of `state`: current norms plus the sums it carries.
pub fn energy_monitor(spaces: &FeSpaces, state: &State) -> Result<EnergyComponents> {
    let sums = state.diagnostics.energy_sums;
    let out = EnergyComponents {
        u_c: norm_sq(spaces, &state.u_c)?,
        phi_f: norm_sq(spaces, &state.phi_f)?,
        phi_m: norm_sq(spaces, &state.phi_m)?,
        ..sums
    };
    if !out.is_finite() {
        return Err(Error::NonFinite("energy monitor".into()));
    }
    Ok(out)
}

/// `int u . n` over conduit boundary edges with `label`, `n` pointing out of
/// the conduit.
pub fn boundary_flux(spaces: &FeSpaces, u: &FieldHandle, label: BoundaryLabel) -> Result<f64> {
    if u.space != SpaceId::ConduitVelocity {
        return Err(Error::Parameter(format!("boundary flux needs a conduit velocity, got {:?}", u.space)));
    }
    let mesh = &spaces.mesh;
    let rule = &spaces.rules.edge;
    let mut sum = 0.0;
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.conduit_label != Some(label) {
            continue;
        }
        let t = mesh.edge_owner(e, Subdomain::Conduit).expect("conduit boundary edge without owner");
        let i = mesh.local_edge(t, e).expect("edge not in its owner");
        let n = mesh.outward_normal(t, i);
        let a = mesh.vertices[edge.vertices[0]];
        let b = mesh.vertices[edge.vertices[1]];
        let g = mesh.geom(t);
        for (s, w) in rule.points.iter().zip(&rule.weights) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let (v, _) = spaces.conduit_velocity(&u.coeffs, t, g.barycentric(x));
            sum += w * edge.length * (v[0] * n[0] + v[1] * n[1]);
        }
    }
    Ok(sum)
}

fn push_values<I: Iterator<Item = f64>>(s: &mut String, vals: I, per_line: usize) {
    for (i, v) in vals.enumerate() {
        if i > 0 {
            s.push(if i % per_line == 0 { '\n' } else { ' ' });
        }
        let _ = write!(s, "{v:e}");
    }
    s.push('\n');
}

/// Legacy ASCII VTK text of a state: point data `u_c`, `p_c` (zero off the
/// conduit) and cell data `phi_f`, `phi_m`, `u_f`, `u_m` (element averages,
/// zero off the porous block) plus the subdomain tag.
pub fn vtk_string(spaces: &FeSpaces, state: &State) -> String {
    let mesh = &spaces.mesh;
    let nv = mesh.vertices.len();
    let nt = mesh.triangles.len();
    let ns = spaces.dofs.n_scalar();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 2.0");
    let _ = writeln!(s, "dpns state t={:e}", state.u_c.time);
    let _ = writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:e} {:e} 0", v[0], v[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    push_values(&mut s, std::iter::repeat(5.0).take(nt), 20);
    let vertex_dof = |v: usize| spaces.dofs.conduit_vertex(v);
    let _ = writeln!(s, "POINT_DATA {nv}");
    let _ = writeln!(s, "VECTORS u_c double");
    for v in 0..nv {
        let u = vertex_dof(v).map_or([0.0, 0.0], |k| [state.u_c.coeffs[k], state.u_c.coeffs[ns + k]]);
        let _ = writeln!(s, "{:e} {:e} 0", u[0], u[1]);
    }
    let _ = writeln!(s, "SCALARS p_c double 1\nLOOKUP_TABLE default");
    push_values(&mut s, (0..nv).map(|v| vertex_dof(v).map_or(0.0, |k| state.p_c.coeffs[k])), 6);
    let _ = writeln!(s, "CELL_DATA {nt}");
    let porous = |t: usize| mesh.tags[t] == Subdomain::Porous;
    let _ = writeln!(s, "SCALARS subdomain int 1\nLOOKUP_TABLE default");
    push_values(&mut s, (0..nt).map(|t| mesh.tags[t].index() as f64), 20);
    for (name, h) in [("phi_f", &state.phi_f), ("phi_m", &state.phi_m)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        push_values(&mut s, (0..nt).map(|t| if porous(t) { spaces.p0_value(&h.coeffs, t) } else { 0.0 }), 6);
    }
    for (name, h) in [("u_f", &state.u_f), ("u_m", &state.u_m)] {
        let _ = writeln!(s, "VECTORS {name} double");
        for t in 0..nt {
            let u = if porous(t) { spaces.bdm_value(&h.coeffs, t, mesh.geom(t).centroid()).0 } else { [0.0, 0.0] };
            let _ = writeln!(s, "{:e} {:e} 0", u[0], u[1]);
        }
    }
    s
}

pub fn export_vtk(spaces: &FeSpaces, state: &State, path: &Path) -> Result<()> {
    std::fs::write(path, vtk_string(spaces, state))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::l2_project;
    use crate::mesh::{build_structured_rect_mesh, StackedSquares};
    use crate::mms::MmsProblem;
    use crate::stepper::State;

    fn spaces(n: usize) -> FeSpaces {
        FeSpaces::new(build_structured_rect_mesh(n, StackedSquares::default()).unwrap())
    }

    fn projected_state(s: &FeSpaces, p: &MmsProblem, t: f64) -> State {
        let v = |f: &dyn Fn(Point) -> Point, sp| l2_project(s, Analytic::Vector(f), sp, t).unwrap();
        let c = |f: &dyn Fn(Point) -> f64, sp| l2_project(s, Analytic::Scalar(f), sp, t).unwrap();
        State::from_fields(
            v(&|x| p.u_c(x, t), SpaceId::ConduitVelocity),
            c(&|x| p.p_c(x, t), SpaceId::ConduitPressure),
            v(&|x| p.u_f(x, t), SpaceId::Bdm1),
            c(&|x| p.phi_f(x, t), SpaceId::P0),
            v(&|x| p.u_m(x, t), SpaceId::Bdm1),
            c(&|x| p.phi_m(x, t), SpaceId::P0),
        )
    }

    #[test]
    fn projection_errors_converge() {
        let p = MmsProblem::default();
        let e4 = compute_errors(&spaces(4), &projected_state(&spaces(4), &p, 0.3), &p, 0.3).unwrap();
        let e8 = compute_errors(&spaces(8), &projected_state(&spaces(8), &p, 0.3), &p, 0.3).unwrap();
        for (name, lo) in [("u_c", 1.8), ("u_f", 1.8), ("phi_f", 0.9), ("phi_m", 0.9), ("p_c", 1.8)] {
            let rate = (e4.absolute.get(name).unwrap() / e8.absolute.get(name).unwrap()).log2();
            assert!(rate > lo, "{name}: {rate}");
        }
        assert!(e8.relative.u_c < e8.absolute.u_c / 0.5);
    }

    #[test]
    fn time_mismatch_is_rejected() {
        let s = spaces(2);
        let p = MmsProblem::default();
        let st = projected_state(&s, &p, 0.3);
        assert!(matches!(compute_errors(&s, &st, &p, 0.4), Err(Error::TimeMismatch { .. })));
    }

    #[test]
    fn representable_fields_have_zero_error() {
        let s = spaces(4);
        let lin = |x: Point| [1.0 + 2.0 * x[0] - x[1], 0.5 * x[1]];
        let u = l2_project(&s, Analytic::Vector(&lin), SpaceId::ConduitVelocity, 0.0).unwrap();
        assert!(l2_error(&s, &u, Some(Analytic::Vector(&lin))).unwrap() < 1e-12);
        let g = |_: Point| [[2.0, -1.0], [0.0, 0.5]];
        assert!(h1_seminorm_error(&s, &u, Some(&g)).unwrap() < 1e-11);
        let uf = l2_project(&s, Analytic::Vector(&lin), SpaceId::Bdm1, 0.0).unwrap();
        assert!(l2_error(&s, &uf, Some(Analytic::Vector(&lin))).unwrap() < 1e-12);
    }

    #[test]
    fn constant_norm_is_sqrt_area() {
        let s = spaces(4);
        let one = l2_project(&s, Analytic::Scalar(&|_| 1.0), SpaceId::P0, 0.0).unwrap();
        assert!((l2_error(&s, &one, None).unwrap() - 1.0).abs() < 1e-13);
        let three = one.scaled(3.0);
        assert!((l2_error(&s, &three, None).unwrap() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive() {
        let s = spaces(4);
        let a = l2_project(&s, Analytic::Vector(&|x| [x[0].sin(), x[1] * x[0]]), SpaceId::Bdm1, 0.0).unwrap();
        let b = l2_project(&s, Analytic::Vector(&|x| [x[1], -x[0] * x[0]]), SpaceId::Bdm1, 0.0).unwrap();
        let na = l2_error(&s, &a, None).unwrap();
        let nb = l2_error(&s, &b, None).unwrap();
        assert!((l2_error(&s, &a.scaled(-2.5), None).unwrap() - 2.5 * na).abs() < 1e-12);
        let mut sum = a.clone();
        for (x, y) in sum.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        assert!(l2_error(&s, &sum, None).unwrap() <= na + nb + 1e-14);
    }

    #[test]
    fn rate_examples() {
        let r = compute_rates(&[1.0 / 8.0, 1.0 / 16.0], &[0.029965, 0.007332]).unwrap();
        assert!((r[1].unwrap() - 2.03).abs() < 0.005);
        let r = compute_rates(&[0.5, 0.25], &[0.1, 0.05]).unwrap();
        assert!(r[0].is_none() && (r[1].unwrap() - 1.0).abs() < 1e-12);
        for e in [1e-3, 1.0, 42.0] {
            let r = compute_rates(&[0.5, 0.25, 0.125], &[e, e / 4.0, e / 16.0]).unwrap();
            assert!((r[1].unwrap() - 2.0).abs() < 1e-12 && (r[2].unwrap() - 2.0).abs() < 1e-12);
        }
        assert!(compute_rates(&[0.5, 0.2], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn rate_table_csv() {
        let mk = |h: f64, e: f64| ErrorReport {
            h,
            absolute: FieldErrors { u_c: e, grad_u_c: e, p_c: e, u_f: e, u_m: e, phi_f: e, phi_m: e },
            ..Default::default()
        };
        let t = make_rate_table(&[mk(0.25, 0.4), mk(0.125, 0.1)]).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("h,field,error,rate\n0.25,u_c,4.000000e-1,--\n0.125,u_c,1.000000e-1,2.00\n"));
        assert_eq!(t.last_rate("phi_m"), Some(2.0));
    }

    #[test]
    fn energy_of_zero_and_scaled_states() {
        let s = spaces(4);
        let zero = State::zeros(&s, 0.0);
        assert_eq!(energy_monitor(&s, &zero).unwrap().total(), 0.0);
        let p = MmsProblem::default();
        let st = projected_state(&s, &p, 0.0);
        let e1 = energy_monitor(&s, &st).unwrap();
        let mut st2 = st.clone();
        for h in [&mut st2.u_c, &mut st2.phi_f, &mut st2.phi_m] {
            *h = h.scaled(2.0);
        }
        let e2 = energy_monitor(&s, &st2).unwrap();
        assert!((e2.u_c - 4.0 * e1.u_c).abs() < 1e-12 * e2.u_c);
        assert!((e2.phi_f - 4.0 * e1.phi_f).abs() < 1e-12 * e2.phi_f);
        assert!((grad_sq(&s, &st2.u_c).unwrap() - 4.0 * grad_sq(&s, &st.u_c).unwrap()).abs() < 1e-10);
        let mut bad = st.clone();
        bad.phi_m.coeffs[0] = f64::NAN;
        assert!(matches!(energy_monitor(&s, &bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn single_element_energy_by_hand() {
        let s = spaces(2);
        let mut st = State::zeros(&s, 0.0);
        let t = s.mesh.triangles_in(Subdomain::Porous)[0];
        st.phi_f.coeffs[s.dofs.p0_dof(t)] = 3.0;
        let area = s.mesh.geom(t).area;
        assert!((energy_monitor(&s, &st).unwrap().phi_f - 9.0 * area).abs() < 1e-14);
        // u_c = (x, 0) on the conduit: ||u||^2 = int x^2 = 1/3, ||grad u||^2 = 1.
        let u = l2_project(&s, Analytic::Vector(&|x| [x[0], 0.0]), SpaceId::ConduitVelocity, 0.0).unwrap();
        assert!((norm_sq(&s, &u).unwrap() - 1.0 / 3.0).abs() < 1e-13);
        assert!((grad_sq(&s, &u).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn flux_of_uniform_flow() {
        let s = spaces(4);
        let u = l2_project(&s, Analytic::Vector(&|_| [0.0, -1.0]), SpaceId::ConduitVelocity, 0.0).unwrap();
        // Wall label covers left, right and top of the upper square.
        let f = boundary_flux(&s, &u, BoundaryLabel::ConduitWall).unwrap();
        assert!((f + 1.0).abs() < 1e-12, "{f}");
    }

    fn parse_point_vectors(text: &str, name: &str, n: usize) -> Vec<Point> {
        let mut lines = text.lines().skip_while(|l| *l != format!("VECTORS {name} double"));
        lines.next().unwrap();
        lines
            .take(n)
            .map(|l| {
                let v: Vec<f64> = l.split_whitespace().map(|w| w.parse().unwrap()).collect();
                [v[0], v[1]]
            })
            .collect()
    }

    #[test]
    fn vtk_zero_state_and_determinism() {
        let s = spaces(2);
        let zero = State::zeros(&s, 0.0);
        let text = vtk_string(&s, &zero);
        assert!(text.starts_with("# vtk DataFile Version 2.0\n"));
        let u = parse_point_vectors(&text, "u_c", s.mesh.vertices.len());
        assert!(u.iter().all(|v| *v == [0.0, 0.0]));
        let p = MmsProblem::default();
        let st = projected_state(&s, &p, 0.1);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.vtk"), dir.path().join("b.vtk"));
        export_vtk(&s, &st, &a).unwrap();
        export_vtk(&s, &st, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn vtk_reparse_recovers_velocity_norm() {
        let s = spaces(8);
        let p = MmsProblem::default();
        let st = projected_state(&s, &p, 0.2);
        let text = vtk_string(&s, &st);
        let nv = s.mesh.vertices.len();
        let mut lines = text.lines().skip_while(|l| !l.starts_with("POINTS"));
        lines.next();
        let pts: Vec<Point> = lines
            .take(nv)
            .map(|l| {
                let v: Vec<f64> = l.split_whitespace().map(|w| w.parse().unwrap()).collect();
                [v[0], v[1]]
            })
            .collect();
        let vals = parse_point_vectors(&text, "u_c", nv);
        let rule = crate::quadrature::make_quadrature(4).unwrap();
        let mut sum = 0.0;
        for &t in s.mesh.triangles_in(Subdomain::Conduit) {
            let tri = s.mesh.triangles[t];
            let g = crate::mesh::TriGeom::new(tri.map(|v| pts[v]));
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let u: Vec<f64> = (0..2).map(|c| (0..3).map(|i| b[i] * vals[tri[i]][c]).sum()).collect();
                sum += 2.0 * g.area * w * (u[0] * u[0] + u[1] * u[1]);
            }
        }
        let from_file = sum.sqrt();
        let in_memory = l2_error(&s, &st.u_c, None).unwrap();
        assert!((from_file - in_memory).abs() < 1e-2 * in_memory, "{from_file} vs {in_memory}");
    }
}
