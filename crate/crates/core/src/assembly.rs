//! Linear systems of the three decoupled sub-steps and essential boundary
//! conditions.
//!
//! Conduit unknowns are ordered `[u_x, u_y, p]` (see [`DofMaps`]); porous
//! unknowns `[u, phi]` with two BDM1 moments per porous edge followed by one
//! P0 value per porous triangle.
//!
//! [`DofMaps`]: crate::fespace::DofMaps

use std::ops::Range;
use std::time::Instant;

use crate::characteristics::trace_from;
use crate::error::{Error, Result};
use crate::fespace::projection::bdm_local_mass;
use crate::fespace::{eval_mini_basis, FeSpaces, FieldHandle, SpaceId};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::{BoundaryLabel, Point, Subdomain};
use crate::mms::{BoundaryDatum, FlowProblem};

#[derive(Clone, Debug, PartialEq)]
pub struct PhysParams {
    pub nu: f64,
    pub mu: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eta_f: f64,
    pub eta_m: f64,
    pub c_ft: f64,
    pub c_mt: f64,
    pub k_f: f64,
    pub k_m: f64,
    /// Interface penalty; zero disables it.
    pub gamma: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            nu: 1.0,
            mu: 1.0,
            rho: 1.0,
            sigma: 1.0,
            alpha: 1.0,
            eta_f: 1.0,
            eta_m: 1.0,
            c_ft: 1.0,
            c_mt: 1.0,
            k_f: 1.0,
            k_m: 1.0,
            gamma: 0.1,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("mu", self.mu),
            ("rho", self.rho),
            ("sigma", self.sigma),
            ("alpha", self.alpha),
            ("eta_f", self.eta_f),
            ("eta_m", self.eta_m),
            ("c_ft", self.c_ft),
            ("c_mt", self.c_mt),
            ("k_f", self.k_f),
            ("k_m", self.k_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Slip coefficient `alpha nu sqrt(D) / sqrt(trace Pi)` with `Pi = k_f I`, `D = 2`.
    pub fn bjs_coefficient(&self) -> f64 {
        self.alpha * self.nu * 2f64.sqrt() / (2.0 * self.k_f).sqrt()
    }

    /// Mass-exchange rate `sigma k_m / mu`.
    pub fn exchange(&self) -> f64 {
        self.sigma * self.k_m / self.mu
    }

    pub fn penalty(&self, h_e: f64) -> f64 {
        self.gamma / (self.rho * h_e)
    }
}

/// Index ranges of the velocity and pressure blocks of a system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub velocity: Range<usize>,
    pub pressure: Range<usize>,
}

impl BlockLayout {
    pub fn conduit(spaces: &FeSpaces) -> Self {
        let nu = spaces.dofs.count(SpaceId::ConduitVelocity);
        let np = spaces.dofs.count(SpaceId::ConduitPressure);
        BlockLayout { velocity: 0..nu, pressure: nu..nu + np }
    }

    pub fn porous(spaces: &FeSpaces) -> Self {
        let nu = spaces.dofs.count(SpaceId::Bdm1);
        let np = spaces.dofs.count(SpaceId::P0);
        BlockLayout { velocity: 0..nu, pressure: nu..nu + np }
    }

    pub fn len(&self) -> usize {
        self.pressure.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counters gathered while assembling a conduit right-hand side.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TraceStats {
    pub traced_points: usize,
    pub clamped_feet: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct StepSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: BlockLayout,
    pub trace: TraceStats,
}

impl StepSystem {
    /// Splits a solution vector into velocity and pressure coefficients.
    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (x[self.layout.velocity.clone()].to_vec(), x[self.layout.pressure.clone()].to_vec())
    }
}

fn check_space(h: &FieldHandle, space: SpaceId, what: &str) -> Result<()> {
    if h.space != space {
        return Err(Error::Parameter(format!("{what} must live in {space:?}, got {:?}", h.space)));
    }
    Ok(())
}

fn check_time(found: f64, expected: f64) -> Result<()> {
    if (found - expected).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(Error::TimeMismatch { expected, found });
    }
    Ok(())
}

fn edge_points(spaces: &FeSpaces, e: usize, rule: &crate::quadrature::LineRule) -> Vec<(Point, f64)> {
    let edge = &spaces.mesh.edges[e];
    let a = spaces.mesh.vertices[edge.vertices[0]];
    let b = spaces.mesh.vertices[edge.vertices[1]];
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(&u, &w)| ([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])], w * edge.length))
        .collect()
}

/// Time-step matrix of the conduit sub-step: mass / dt, viscous, slip,
/// interface penalty, and the pressure-velocity coupling.
pub fn ns_matrix_triplets(spaces: &FeSpaces, params: &PhysParams, dt: f64) -> TripletBuilder {
    let mesh = &spaces.mesh;
    let dofs = &spaces.dofs;
    let ns = dofs.n_scalar();
    let n = BlockLayout::conduit(spaces).len();
    let p0 = 2 * ns;
    let rule = &spaces.rules.assembly;
    let mut b = TripletBuilder::with_capacity(n, n, 121 * dofs.conduit_triangles.len());
    for &t in mesh.triangles_in(Subdomain::Conduit) {
        let g = mesh.geom(t);
        let sd = dofs.mini_scalar_dofs(mesh, t);
        let pd = dofs.pressure_dofs(mesh, t);
        let mut idx = [0usize; 11];
        for i in 0..4 {
            idx[i] = sd[i];
            idx[4 + i] = ns + sd[i];
        }
        for k in 0..3 {
            idx[8 + k] = p0 + pd[k];
        }
        let mut a = [[0.0; 11]; 11];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let v = eval_mini_basis(g, *bary);
            let jw = 2.0 * g.area * w;
            for i in 0..4 {
                for j in 0..4 {
                    let gi = v.vel_grad[i];
                    let gj = v.vel_grad[j];
                    let m = jw * (v.vel[i] * v.vel[j] / dt + params.nu * (gi[0] * gj[0] + gi[1] * gj[1]));
                    a[i][j] += m;
                    a[4 + i][4 + j] += m;
                }
                for k in 0..3 {
                    for c in 0..2 {
                        let bv = jw * v.pres[k] * v.vel_grad[i][c];
                        a[4 * c + i][8 + k] -= bv;
                        a[8 + k][4 * c + i] += bv;
                    }
                }
            }
        }
        for i in 0..11 {
            for j in 0..11 {
                if a[i][j] != 0.0 || (i < 8 && j < 8) || (i >= 8) != (j >= 8) {
                    b.push(idx[i], idx[j], a[i][j]);
                }
            }
        }
    }
    let beta = params.bjs_coefficient();
    for &e in &mesh.interface_edges {
        let edge = &mesh.edges[e];
        let t = mesh.edge_owner(e, Subdomain::Conduit).expect("interface edge without conduit owner");
        let g = mesh.geom(t);
        let sd = dofs.mini_scalar_dofs(mesh, t);
        let nrm = edge.normal;
        let tau = edge.tangent();
        let pen = params.penalty(edge.length);
        let mut a = [[0.0; 8]; 8];
        for (x, jw) in edge_points(spaces, e, &spaces.rules.edge) {
            let v = eval_mini_basis(g, g.barycentric(x));
            for i in 0..4 {
                for j in 0..4 {
                    let pij = jw * v.vel[i] * v.vel[j];
                    for c in 0..2 {
                        for d in 0..2 {
                            a[4 * c + i][4 * d + j] += pij * (beta * tau[c] * tau[d] + pen * nrm[c] * nrm[d]);
                        }
                    }
                }
            }
        }
        for c in 0..2 {
            for d in 0..2 {
                for i in 0..4 {
                    for j in 0..4 {
                        b.push(c * ns + sd[i], d * ns + sd[j], a[4 * c + i][4 * d + j]);
                    }
                }
            }
        }
    }
    b
}

pub fn ns_matrix(spaces: &FeSpaces, params: &PhysParams, dt: f64) -> Result<CsrMatrix> {
    ns_matrix_triplets(spaces, params, dt).compress()
}

/// How the inertia term `u^n / dt` enters the conduit right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inertia {
    /// Evaluate the old velocity at the backtracked foot.
    Characteristic,
    /// Evaluate the old velocity in place (convection is handled implicitly).
    Eulerian,
}

/// Right-hand side of the conduit sub-step.
#[allow(clippy::too_many_arguments)]
pub fn ns_rhs(
    spaces: &FeSpaces,
    u_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    u_f_lag: &FieldHandle,
    t_next: f64,
    dt: f64,
    problem: &dyn FlowProblem,
    inertia: Inertia,
) -> Result<(Vec<f64>, TraceStats)> {
    check_space(u_old, SpaceId::ConduitVelocity, "old conduit velocity")?;
    check_space(phi_f_lag, SpaceId::P0, "lagged fracture pressure")?;
    check_space(u_f_lag, SpaceId::Bdm1, "lagged fracture velocity")?;
    check_time(phi_f_lag.time, u_f_lag.time)?;
    let params = problem.params();
    let mesh = &spaces.mesh;
    let dofs = &spaces.dofs;
    let ns = dofs.n_scalar();
    let rule = &spaces.rules.assembly;
    let mut rhs = vec![0.0; BlockLayout::conduit(spaces).len()];
    let mut stats = TraceStats::default();
    let mut trace_time = 0.0;
    for &t in mesh.triangles_in(Subdomain::Conduit) {
        let g = mesh.geom(t);
        let sd = dofs.mini_scalar_dofs(mesh, t);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let v = eval_mini_basis(g, *bary);
            let x = g.point(*bary);
            let f = problem.forcing_conduit(x, t_next);
            let old = match inertia {
                Inertia::Characteristic => {
                    let t0 = Instant::now();
                    let tr = trace_from(spaces, &u_old.coeffs, t, *bary, dt);
                    trace_time += t0.elapsed().as_secs_f64();
                    stats.traced_points += 1;
                    stats.clamped_feet += tr.clamped as usize;
                    tr.value
                }
                Inertia::Eulerian => spaces.conduit_velocity(&u_old.coeffs, t, *bary).0,
            };
            let jw = 2.0 * g.area * w;
            for i in 0..4 {
                rhs[sd[i]] += jw * (f[0] + old[0] / dt) * v.vel[i];
                rhs[ns + sd[i]] += jw * (f[1] + old[1] / dt) * v.vel[i];
            }
        }
    }
    for &e in &mesh.interface_edges {
        let edge = &mesh.edges[e];
        let tc = mesh.edge_owner(e, Subdomain::Conduit).expect("interface edge without conduit owner");
        let td = mesh.edge_owner(e, Subdomain::Porous).expect("interface edge without porous owner");
        let g = mesh.geom(tc);
        let sd = dofs.mini_scalar_dofs(mesh, tc);
        let nrm = edge.normal;
        let pen = params.penalty(edge.length);
        let phi = spaces.p0_value(&phi_f_lag.coeffs, td);
        for (x, jw) in edge_points(spaces, e, &spaces.rules.edge) {
            let v = eval_mini_basis(g, g.barycentric(x));
            let uf = spaces.bdm_value(&u_f_lag.coeffs, td, x).0;
            let ufn = uf[0] * nrm[0] + uf[1] * nrm[1];
            let s = jw * (phi / params.rho + pen * ufn);
            for i in 0..4 {
                rhs[sd[i]] += s * v.vel[i] * nrm[0];
                rhs[ns + sd[i]] += s * v.vel[i] * nrm[1];
            }
        }
    }
    stats.seconds = if inertia == Inertia::Characteristic { trace_time } else { 0.0 };
    Ok((rhs, stats))
}

/// Essential conduit velocity values at time `t` on every non-interface
/// boundary vertex that carries Dirichlet data.
pub fn ns_constraints(spaces: &FeSpaces, problem: &dyn FlowProblem, t: f64) -> Result<Vec<(usize, f64)>> {
    let mesh = &spaces.mesh;
    let ns = spaces.dofs.n_scalar();
    let mut out = Vec::new();
    for edge in &mesh.edges {
        let Some(label) = edge.conduit_label else { continue };
        if label == BoundaryLabel::Interface {
            continue;
        }
        for &v in &edge.vertices {
            let x = mesh.vertices[v];
            if let BoundaryDatum::Velocity(u) = problem.conduit_boundary(x, t, label)? {
                let k = spaces.dofs.conduit_vertex(v).expect("conduit boundary vertex without dof");
                out.push((k, u[0]));
                out.push((ns + k, u[1]));
            }
        }
    }
    Ok(out)
}

/// Assembles and constrains the characteristic conduit sub-step
/// `t_next - dt -> t_next`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ns_step(
    spaces: &FeSpaces,
    u_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    u_f_lag: &FieldHandle,
    t_next: f64,
    dt: f64,
    problem: &dyn FlowProblem,
) -> Result<StepSystem> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    check_time(u_old.time, t_next - dt)?;
    let matrix = ns_matrix(spaces, problem.params(), dt)?;
    assemble_ns_step_with(spaces, matrix, u_old, phi_f_lag, u_f_lag, t_next, dt, problem)
}

/// As [`assemble_ns_step`], with the operator from [`ns_matrix`] supplied
/// by the caller.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ns_step_with(
    spaces: &FeSpaces,
    matrix: CsrMatrix,
    u_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    u_f_lag: &FieldHandle,
    t_next: f64,
    dt: f64,
    problem: &dyn FlowProblem,
) -> Result<StepSystem> {
    check_time(u_old.time, t_next - dt)?;
    if matrix.nrows != BlockLayout::conduit(spaces).len() {
        return Err(Error::Dimension(format!("conduit operator has {} rows", matrix.nrows)));
    }
    let (rhs, trace) = ns_rhs(spaces, u_old, phi_f_lag, u_f_lag, t_next, dt, problem, Inertia::Characteristic)?;
    let constraints = ns_constraints(spaces, problem, t_next)?;
    let system = StepSystem { matrix, rhs, layout: BlockLayout::conduit(spaces), trace };
    apply_dirichlet(system, &constraints)
}

/// Newton linearization of the convective term around `u_k`:
/// `c(d, u_k, v) + c(u_k, d, v)` in the matrix and `c(u_k, u_k, v)` on the
/// right-hand side.
pub fn ns_convection(spaces: &FeSpaces, u_k: &[f64]) -> (TripletBuilder, Vec<f64>) {
    let mesh = &spaces.mesh;
    let dofs = &spaces.dofs;
    let ns = dofs.n_scalar();
    let n = BlockLayout::conduit(spaces).len();
    let rule = &spaces.rules.convection;
    let mut b = TripletBuilder::with_capacity(n, n, 64 * dofs.conduit_triangles.len());
    let mut rhs = vec![0.0; n];
    for &t in mesh.triangles_in(Subdomain::Conduit) {
        let g = mesh.geom(t);
        let sd = dofs.mini_scalar_dofs(mesh, t);
        let mut a = [[0.0; 8]; 8];
        let mut r = [0.0; 8];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let v = eval_mini_basis(g, *bary);
            let (u, gu) = spaces.conduit_velocity(u_k, t, *bary);
            let jw = 2.0 * g.area * w;
            for i in 0..4 {
                for c in 0..2 {
                    r[4 * c + i] += jw * v.vel[i] * (u[0] * gu[c][0] + u[1] * gu[c][1]);
                }
                for j in 0..4 {
                    let adv = u[0] * v.vel_grad[j][0] + u[1] * v.vel_grad[j][1];
                    let pij = jw * v.vel[i] * v.vel[j];
                    for c in 0..2 {
                        a[4 * c + i][4 * c + j] += jw * v.vel[i] * adv;
                        for d in 0..2 {
                            a[4 * c + i][4 * d + j] += pij * gu[c][d];
                        }
                    }
                }
            }
        }
        for c in 0..2 {
            for i in 0..4 {
                rhs[c * ns + sd[i]] += r[4 * c + i];
                for d in 0..2 {
                    for j in 0..4 {
                        b.push(c * ns + sd[i], d * ns + sd[j], a[4 * c + i][4 * d + j]);
                    }
                }
            }
        }
    }
    (b, rhs)
}

/// Which porous continuum a Darcy system describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Continuum {
    Fracture,
    Matrix,
}

/// Time-independent left-hand side of a porous sub-step with step `ds`.
pub fn darcy_matrix(spaces: &FeSpaces, params: &PhysParams, ds: f64, kind: Continuum) -> Result<CsrMatrix> {
    let mesh = &spaces.mesh;
    let dofs = &spaces.dofs;
    let layout = BlockLayout::porous(spaces);
    let n = layout.len();
    let p0 = layout.pressure.start;
    let (k, storage) = match kind {
        Continuum::Fracture => (params.k_f, params.eta_f * params.c_ft),
        Continuum::Matrix => (params.k_m, params.eta_m * params.c_mt),
    };
    let drag = params.mu / (params.rho * k);
    let reaction = storage / (params.rho * ds) + params.exchange() / params.rho;
    let mut b = TripletBuilder::with_capacity(n, n, 49 * dofs.porous_triangles.len());
    for &t in mesh.triangles_in(Subdomain::Porous) {
        let g = mesh.geom(t);
        let m = bdm_local_mass(spaces, t);
        let idx = dofs.bdm_dofs(mesh, t);
        let q = p0 + dofs.p0_dof(t);
        let div = spaces.bdm_element(t).eval(g.centroid()).div;
        for i in 0..6 {
            for j in 0..6 {
                b.push(idx[i], idx[j], drag * m[i][j]);
            }
            let bv = div[i] * g.area / params.rho;
            b.push(idx[i], q, -bv);
            b.push(q, idx[i], bv);
        }
        b.push(q, q, reaction * g.area);
    }
    if kind == Continuum::Fracture {
        for &e in &mesh.interface_edges {
            let nrm = mesh.edges[e].normal;
            let pen = params.penalty(mesh.edges[e].length);
            let t = mesh.edge_owner(e, Subdomain::Porous).expect("interface edge without porous owner");
            let el = spaces.bdm_element(t);
            let idx = dofs.bdm_dofs(mesh, t);
            let mut a = [[0.0; 6]; 6];
            for (x, jw) in edge_points(spaces, e, &spaces.rules.edge) {
                let v = el.eval(x);
                let vn = v.vel.map(|w| w[0] * nrm[0] + w[1] * nrm[1]);
                for i in 0..6 {
                    for j in 0..6 {
                        a[i][j] += jw * pen * vn[i] * vn[j];
                    }
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    b.push(idx[i], idx[j], a[i][j]);
                }
            }
        }
    }
    b.compress()
}

/// Storage, exchange and source contributions shared by both continua.
#[allow(clippy::too_many_arguments)]
fn darcy_pressure_rhs(
    spaces: &FeSpaces,
    params: &PhysParams,
    storage: f64,
    own_old: &FieldHandle,
    other_lag: &FieldHandle,
    ds: f64,
    source: impl Fn(Point) -> f64,
    rhs: &mut [f64],
) {
    let mesh = &spaces.mesh;
    let p0 = BlockLayout::porous(spaces).pressure.start;
    let rule = &spaces.rules.assembly;
    let s = storage / (params.rho * ds);
    let ex = params.exchange() / params.rho;
    for &t in mesh.triangles_in(Subdomain::Porous) {
        let g = mesh.geom(t);
        let q = spaces.dofs.p0_dof(t);
        let f: f64 = rule.points.iter().zip(&rule.weights).map(|(b, w)| w * source(g.point(*b))).sum();
        rhs[p0 + q] += g.area * (s * own_old.coeffs[q] + ex * other_lag.coeffs[q]) + 2.0 * g.area * f / params.rho;
    }
}

pub fn darcy_rhs_matrix(
    spaces: &FeSpaces,
    phi_m_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    ds: f64,
    t_next: f64,
    problem: &dyn FlowProblem,
) -> Result<Vec<f64>> {
    check_space(phi_m_old, SpaceId::P0, "old matrix pressure")?;
    check_space(phi_f_lag, SpaceId::P0, "lagged fracture pressure")?;
    let params = problem.params();
    let mut rhs = vec![0.0; BlockLayout::porous(spaces).len()];
    let storage = params.eta_m * params.c_mt;
    darcy_pressure_rhs(spaces, params, storage, phi_m_old, phi_f_lag, ds, |x| problem.forcing_matrix(x, t_next), &mut rhs);
    Ok(rhs)
}

#[allow(clippy::too_many_arguments)]
pub fn darcy_rhs_fracture(
    spaces: &FeSpaces,
    phi_f_old: &FieldHandle,
    phi_m_lag: &FieldHandle,
    s_avg: &FieldHandle,
    ds: f64,
    t_next: f64,
    problem: &dyn FlowProblem,
) -> Result<Vec<f64>> {
    check_space(phi_f_old, SpaceId::P0, "old fracture pressure")?;
    check_space(phi_m_lag, SpaceId::P0, "lagged matrix pressure")?;
    check_space(s_avg, SpaceId::ConduitVelocity, "interface velocity average")?;
    check_time(s_avg.time, t_next)?;
    let params = problem.params();
    let mesh = &spaces.mesh;
    let mut rhs = vec![0.0; BlockLayout::porous(spaces).len()];
    let storage = params.eta_f * params.c_ft;
    darcy_pressure_rhs(spaces, params, storage, phi_f_old, phi_m_lag, ds, |x| problem.forcing_fracture(x, t_next), &mut rhs);
    for &e in &mesh.interface_edges {
        let nrm = mesh.edges[e].normal;
        let pen = params.penalty(mesh.edges[e].length);
        let td = mesh.edge_owner(e, Subdomain::Porous).expect("interface edge without porous owner");
        let tc = mesh.edge_owner(e, Subdomain::Conduit).expect("interface edge without conduit owner");
        let el = spaces.bdm_element(td);
        let idx = spaces.dofs.bdm_dofs(mesh, td);
        let phi = spaces.p0_value(&phi_f_old.coeffs, td);
        let gc = mesh.geom(tc);
        for (x, jw) in edge_points(spaces, e, &spaces.rules.edge) {
            let v = el.eval(x);
            let (s, _) = spaces.conduit_velocity(&s_avg.coeffs, tc, gc.barycentric(x));
            let sn = s[0] * nrm[0] + s[1] * nrm[1];
            let coef = jw * (-phi / params.rho + pen * sn);
            for i in 0..6 {
                rhs[idx[i]] += coef * (v.vel[i][0] * nrm[0] + v.vel[i][1] * nrm[1]);
            }
        }
    }
    Ok(rhs)
}

/// Essential flux moments on the porous boundary at time `t`. The matrix
/// flux is additionally zero on the interface.
pub fn darcy_constraints(
    spaces: &FeSpaces,
    problem: &dyn FlowProblem,
    t: f64,
    kind: Continuum,
) -> Result<Vec<(usize, f64)>> {
    let mesh = &spaces.mesh;
    let rule = &spaces.rules.edge_fine;
    let mut out = Vec::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        let Some(label) = edge.porous_label else { continue };
        let k = spaces.dofs.porous_edge(e).expect("porous boundary edge without dofs");
        let mut mom = [0.0; 2];
        if label != BoundaryLabel::Interface {
            for (x, jw) in edge_points(spaces, e, rule) {
                let v = match kind {
                    Continuum::Fracture => problem.fracture_boundary(x, t, label)?,
                    Continuum::Matrix => problem.matrix_boundary(x, t, label)?,
                };
                let flux = v[0] * edge.normal[0] + v[1] * edge.normal[1];
                mom[0] += jw * flux;
                mom[1] += jw * flux * crate::fespace::bdm::edge_parameter(mesh, e, x);
            }
        } else if kind == Continuum::Fracture {
            continue;
        }
        out.push((2 * k, mom[0]));
        out.push((2 * k + 1, mom[1]));
    }
    Ok(out)
}

/// Assembles and constrains the matrix-continuum sub-step.
pub fn assemble_matrix_darcy_step(
    spaces: &FeSpaces,
    phi_m_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    ds: f64,
    t_next: f64,
    problem: &dyn FlowProblem,
) -> Result<StepSystem> {
    let matrix = darcy_matrix(spaces, problem.params(), ds, Continuum::Matrix)?;
    let rhs = darcy_rhs_matrix(spaces, phi_m_old, phi_f_lag, ds, t_next, problem)?;
    let constraints = darcy_constraints(spaces, problem, t_next, Continuum::Matrix)?;
    let system = StepSystem { matrix, rhs, layout: BlockLayout::porous(spaces), trace: TraceStats::default() };
    apply_dirichlet(system, &constraints)
}

/// Assembles and constrains the fracture-continuum sub-step.
#[allow(clippy::too_many_arguments)]
pub fn assemble_fracture_darcy_step(
    spaces: &FeSpaces,
    phi_f_old: &FieldHandle,
    phi_m_lag: &FieldHandle,
    s_avg: &FieldHandle,
    ds: f64,
    t_next: f64,
    problem: &dyn FlowProblem,
) -> Result<StepSystem> {
    let matrix = darcy_matrix(spaces, problem.params(), ds, Continuum::Fracture)?;
    let rhs = darcy_rhs_fracture(spaces, phi_f_old, phi_m_lag, s_avg, ds, t_next, problem)?;
    let constraints = darcy_constraints(spaces, problem, t_next, Continuum::Fracture)?;
    let system = StepSystem { matrix, rhs, layout: BlockLayout::porous(spaces), trace: TraceStats::default() };
    apply_dirichlet(system, &constraints)
}

/// Imposes `x[dof] = value` by symmetric elimination: constrained rows and
/// columns are zeroed (entries stay in the pattern), the diagonal set to 1,
/// and the right-hand side corrected.
pub fn apply_dirichlet(mut system: StepSystem, constraints: &[(usize, f64)]) -> Result<StepSystem> {
    if constraints.is_empty() {
        return Ok(system);
    }
    let n = system.matrix.nrows;
    let mut value: Vec<Option<f64>> = vec![None; n];
    for &(dof, v) in constraints {
        if dof >= n {
            return Err(Error::IndexOutOfRange { row: dof, col: dof, nrows: n, ncols: n });
        }
        match value[dof] {
            Some(prev) if (prev - v).abs() > 1e-12 * prev.abs().max(v.abs()).max(1.0) => {
                return Err(Error::ConflictingConstraint { dof, first: prev, second: v });
            }
            Some(_) => {}
            None => value[dof] = Some(v),
        }
    }
    let a = &mut system.matrix;
    for r in 0..n {
        let (s, e) = (a.row_ptr[r], a.row_ptr[r + 1]);
        if let Some(g) = value[r] {
            let mut diag = false;
            for k in s..e {
                if a.col_idx[k] == r {
                    a.values[k] = 1.0;
                    diag = true;
                } else {
                    a.values[k] = 0.0;
                }
            }
            if !diag {
                return Err(Error::Dimension(format!("row {r} has no diagonal entry to constrain")));
            }
            system.rhs[r] = g;
        } else {
            for k in s..e {
                if let Some(g) = value[a.col_idx[k]] {
                    system.rhs[r] -= a.values[k] * g;
                    a.values[k] = 0.0;
                }
            }
        }
    }
    Ok(system)
}
