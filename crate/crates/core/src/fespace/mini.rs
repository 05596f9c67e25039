//! MINI element: P1 plus cubic bubble per velocity component, P1 pressure.

use crate::mesh::{Point, TriGeom};

/// Shape values of one velocity component and of the pressure at a point.
#[derive(Clone, Copy, Debug)]
pub struct MiniValues {
    /// `{l0, l1, l2, 27 l0 l1 l2}`
    pub vel: [f64; 4],
    pub vel_grad: [Point; 4],
    /// `{l0, l1, l2}`
    pub pres: [f64; 3],
}

pub fn eval_mini_basis(geom: &TriGeom, bary: [f64; 3]) -> MiniValues {
    let [l0, l1, l2] = bary;
    let g = &geom.grad;
    let bubble_grad = [
        27.0 * (l1 * l2 * g[0][0] + l0 * l2 * g[1][0] + l0 * l1 * g[2][0]),
        27.0 * (l1 * l2 * g[0][1] + l0 * l2 * g[1][1] + l0 * l1 * g[2][1]),
    ];
    MiniValues {
        vel: [l0, l1, l2, 27.0 * l0 * l1 * l2],
        vel_grad: [g[0], g[1], g[2], bubble_grad],
        pres: [l0, l1, l2],
    }
}
