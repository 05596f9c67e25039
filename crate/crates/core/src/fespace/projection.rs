//! L2-orthogonal projection onto the discrete spaces.

use super::{eval_mini_basis, FeSpaces, FieldHandle, SpaceId};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LinearSolver, TripletBuilder};
use crate::mesh::{Point, Subdomain};

/// A closed-form function to project.
#[derive(Clone, Copy)]
pub enum Analytic<'a> {
    Scalar(&'a dyn Fn(Point) -> f64),
    Vector(&'a dyn Fn(Point) -> Point),
}

/// Mass matrix of a space. For the conduit velocity this is the scalar MINI
/// mass matrix shared by both components.
pub fn mass_matrix(spaces: &FeSpaces, space: SpaceId) -> Result<CsrMatrix> {
    let mesh = &spaces.mesh;
    let rule = &spaces.rules.assembly;
    let dofs = &spaces.dofs;
    match space {
        SpaceId::ConduitVelocity | SpaceId::ConduitPressure => {
            let velocity = space == SpaceId::ConduitVelocity;
            let n = if velocity { dofs.n_scalar() } else { dofs.count(SpaceId::ConduitPressure) };
            let mut b = TripletBuilder::with_capacity(n, n, 16 * dofs.conduit_triangles.len());
            for &t in mesh.triangles_in(Subdomain::Conduit) {
                let g = mesh.geom(t);
                let nloc = if velocity { 4 } else { 3 };
                let idx = dofs.mini_scalar_dofs(mesh, t);
                let mut m = [[0.0; 4]; 4];
                for (bary, w) in rule.points.iter().zip(&rule.weights) {
                    let v = eval_mini_basis(g, *bary);
                    let phi = if velocity { v.vel } else { [v.pres[0], v.pres[1], v.pres[2], 0.0] };
                    let jw = 2.0 * g.area * w;
                    for i in 0..nloc {
                        for j in 0..nloc {
                            m[i][j] += jw * phi[i] * phi[j];
                        }
                    }
                }
                for i in 0..nloc {
                    for j in 0..nloc {
                        b.push(idx[i], idx[j], m[i][j]);
                    }
                }
            }
            b.compress()
        }
        SpaceId::Bdm1 => {
            let n = dofs.count(SpaceId::Bdm1);
            let mut b = TripletBuilder::with_capacity(n, n, 36 * dofs.porous_triangles.len());
            for &t in mesh.triangles_in(Subdomain::Porous) {
                let m = bdm_local_mass(spaces, t);
                let idx = dofs.bdm_dofs(mesh, t);
                for i in 0..6 {
                    for j in 0..6 {
                        b.push(idx[i], idx[j], m[i][j]);
                    }
                }
            }
            b.compress()
        }
        SpaceId::P0 => {
            let n = dofs.count(SpaceId::P0);
            let mut b = TripletBuilder::new(n, n);
            for &t in mesh.triangles_in(Subdomain::Porous) {
                b.push(dofs.p0_dof(t), dofs.p0_dof(t), mesh.geom(t).area);
            }
            b.compress()
        }
    }
}

pub(crate) fn bdm_local_mass(spaces: &FeSpaces, t: usize) -> [[f64; 6]; 6] {
    let g = spaces.mesh.geom(t);
    let el = spaces.bdm_element(t);
    let rule = &spaces.rules.assembly;
    let mut m = [[0.0; 6]; 6];
    for (bary, w) in rule.points.iter().zip(&rule.weights) {
        let v = el.eval(g.point(*bary));
        let jw = 2.0 * g.area * w;
        for i in 0..6 {
            for j in 0..6 {
                m[i][j] += jw * (v.vel[i][0] * v.vel[j][0] + v.vel[i][1] * v.vel[j][1]);
            }
        }
    }
    m
}

/// Load vector `(f, chi_i)` for every basis function of `space`; for the
/// conduit velocity the two components are stacked.
pub fn load_vector(spaces: &FeSpaces, f: Analytic<'_>, space: SpaceId) -> Result<Vec<f64>> {
    let mesh = &spaces.mesh;
    let dofs = &spaces.dofs;
    let rule = &spaces.rules.error;
    let mut out = vec![0.0; dofs.count(space)];
    let wrong = || Error::Parameter(format!("analytic function has the wrong rank for {space:?}"));
    match space {
        SpaceId::ConduitVelocity => {
            let Analytic::Vector(f) = f else { return Err(wrong()) };
            let ns = dofs.n_scalar();
            for &t in mesh.triangles_in(Subdomain::Conduit) {
                let g = mesh.geom(t);
                let idx = dofs.mini_scalar_dofs(mesh, t);
                for (bary, w) in rule.points.iter().zip(&rule.weights) {
                    let v = eval_mini_basis(g, *bary);
                    let fx = f(g.point(*bary));
                    let jw = 2.0 * g.area * w;
                    for i in 0..4 {
                        out[idx[i]] += jw * fx[0] * v.vel[i];
                        out[ns + idx[i]] += jw * fx[1] * v.vel[i];
                    }
                }
            }
        }
        SpaceId::ConduitPressure => {
            let Analytic::Scalar(f) = f else { return Err(wrong()) };
            for &t in mesh.triangles_in(Subdomain::Conduit) {
                let g = mesh.geom(t);
                let idx = dofs.pressure_dofs(mesh, t);
                for (bary, w) in rule.points.iter().zip(&rule.weights) {
                    let fx = f(g.point(*bary));
                    for i in 0..3 {
                        out[idx[i]] += 2.0 * g.area * w * fx * bary[i];
                    }
                }
            }
        }
        SpaceId::Bdm1 => {
            let Analytic::Vector(f) = f else { return Err(wrong()) };
            for &t in mesh.triangles_in(Subdomain::Porous) {
                let g = mesh.geom(t);
                let el = spaces.bdm_element(t);
                let idx = dofs.bdm_dofs(mesh, t);
                for (bary, w) in rule.points.iter().zip(&rule.weights) {
                    let x = g.point(*bary);
                    let v = el.eval(x);
                    let fx = f(x);
                    for i in 0..6 {
                        out[idx[i]] += 2.0 * g.area * w * (fx[0] * v.vel[i][0] + fx[1] * v.vel[i][1]);
                    }
                }
            }
        }
        SpaceId::P0 => {
            let Analytic::Scalar(f) = f else { return Err(wrong()) };
            for &t in mesh.triangles_in(Subdomain::Porous) {
                let g = mesh.geom(t);
                let s: f64 = rule.points.iter().zip(&rule.weights).map(|(b, w)| w * f(g.point(*b))).sum();
                out[dofs.p0_dof(t)] += 2.0 * g.area * s;
            }
        }
    }
    Ok(out)
}

/// Projects `f` onto `space`, labelling the result with time `time`.
pub fn l2_project(spaces: &FeSpaces, f: Analytic<'_>, space: SpaceId, time: f64) -> Result<FieldHandle> {
    let rhs = load_vector(spaces, f, space)?;
    let mass = mass_matrix(spaces, space)?;
    let coeffs = if space == SpaceId::ConduitVelocity {
        let ns = spaces.dofs.n_scalar();
        let mut solver = LinearSolver::new();
        let fact = solver.factorize(&mass)?;
        let mut c = Vec::with_capacity(2 * ns);
        for comp in 0..2 {
            let b = &rhs[comp * ns..(comp + 1) * ns];
            if b.iter().all(|&v| v == 0.0) {
                c.extend(std::iter::repeat(0.0).take(ns));
            } else {
                c.extend(fact.solve_checked(&mass, b)?);
            }
        }
        c
    } else {
        LinearSolver::new().solve(&mass, &rhs)?
    };
    Ok(FieldHandle { space, coeffs, time })
}
