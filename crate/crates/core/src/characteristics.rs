//! Backtracking along characteristics of the conduit velocity.

use crate::error::{Error, Result};
use crate::fespace::{FeSpaces, FieldHandle, SpaceId};
use crate::mesh::{Point, Subdomain};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracedValue {
    pub foot: Point,
    pub value: Point,
    /// The backtracked foot left the conduit and was cut at its boundary.
    pub clamped: bool,
}

/// Evaluates `u_old(x - u_old(x) dt)` for a point `x` inside conduit triangle
/// `t` given by barycentric coordinates. Feet outside the conduit are moved
/// to the first boundary crossing of the segment from `x`.
pub fn trace_from(spaces: &FeSpaces, coeffs: &[f64], t: usize, bary: [f64; 3], dt: f64) -> TracedValue {
    let mesh = &spaces.mesh;
    let x = mesh.geom(t).point(bary);
    let (u, _) = spaces.conduit_velocity(coeffs, t, bary);
    if u[0] == 0.0 && u[1] == 0.0 {
        return TracedValue { foot: x, value: u, clamped: false };
    }
    let target = [x[0] - u[0] * dt, x[1] - u[1] * dt];
    let end = mesh.walk_segment(t, x, target);
    let (value, _) = spaces.conduit_velocity(coeffs, end.element, end.bary);
    TracedValue { foot: end.point, value, clamped: end.clamped }
}

/// Locates `x` in the conduit (starting from `hint`) and traces back from it.
pub fn trace_evaluate(
    spaces: &FeSpaces,
    u_old: &FieldHandle,
    x: Point,
    hint: Option<usize>,
    dt: f64,
) -> Result<TracedValue> {
    if u_old.space != SpaceId::ConduitVelocity {
        return Err(Error::Parameter(format!("characteristics need a conduit velocity, got {:?}", u_old.space)));
    }
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let loc = spaces
        .mesh
        .locate_point(Subdomain::Conduit, x, hint)
        .ok_or(Error::PointNotFound(x[0], x[1]))?;
    Ok(trace_from(spaces, &u_old.coeffs, loc.element, loc.bary, dt))
}
