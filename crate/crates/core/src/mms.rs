//! Problem definitions: the manufactured solution on the stacked unit
//! squares, the wellbore scenario, and the all-zero problem.

use std::f64::consts::PI;

use crate::assembly::PhysParams;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryLabel, Point, WellboreGeometry};

/// Boundary condition for the conduit velocity on one boundary point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryDatum {
    Velocity(Point),
    /// Zero traction; no essential data.
    DoNothing,
}

/// Data of one flow configuration: parameters, sources, boundary and
/// initial values.
pub trait FlowProblem: Sync {
    fn params(&self) -> &PhysParams;

    fn forcing_conduit(&self, _x: Point, _t: f64) -> Point {
        [0.0, 0.0]
    }
    fn forcing_fracture(&self, _x: Point, _t: f64) -> f64 {
        0.0
    }
    fn forcing_matrix(&self, _x: Point, _t: f64) -> f64 {
        0.0
    }

    fn conduit_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<BoundaryDatum>;
    /// Velocity whose normal component is imposed on the fracture flux.
    fn fracture_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<Point>;
    /// Velocity whose normal component is imposed on the matrix flux away
    /// from the interface (which is always no-flux for the matrix).
    fn matrix_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<Point>;

    fn initial_conduit_velocity(&self, _x: Point) -> Point {
        [0.0, 0.0]
    }
    fn initial_conduit_pressure(&self, _x: Point) -> f64 {
        0.0
    }
    fn initial_fracture_velocity(&self, _x: Point) -> Point {
        [0.0, 0.0]
    }
    fn initial_fracture_pressure(&self, _x: Point) -> f64 {
        0.0
    }
    fn initial_matrix_velocity(&self, _x: Point) -> Point {
        [0.0, 0.0]
    }
    fn initial_matrix_pressure(&self, _x: Point) -> f64 {
        0.0
    }
}

/// Closed-form fields, used for error measurement.
pub trait ExactSolution: Sync {
    fn u_c(&self, x: Point, t: f64) -> Point;
    /// `grad[c][d] = d u_c / d x_d`
    fn grad_u_c(&self, x: Point, t: f64) -> [Point; 2];
    fn p_c(&self, x: Point, t: f64) -> f64;
    fn phi_f(&self, x: Point, t: f64) -> f64;
    fn phi_m(&self, x: Point, t: f64) -> f64;
    fn u_f(&self, x: Point, t: f64) -> Point;
    fn u_m(&self, x: Point, t: f64) -> Point;
}

/// Smooth manufactured solution on `[0,1] x [0,2]` with time factor `cos t`.
#[derive(Clone, Debug)]
pub struct MmsProblem {
    pub params: PhysParams,
    pub final_time: f64,
    /// Multiplies every field and source (1 by default).
    pub scale: f64,
}

impl Default for MmsProblem {
    fn default() -> Self {
        MmsProblem { params: PhysParams::default(), final_time: 0.5, scale: 1.0 }
    }
}

/// `g(x) = 2 - pi sin(pi x)` and its first two derivatives.
fn g(x: f64) -> (f64, f64, f64) {
    let s = (PI * x).sin();
    (2.0 - PI * s, -PI * PI * (PI * x).cos(), PI * PI * PI * s)
}

/// Spatial factor of the conduit velocity with first and second derivatives.
struct VelocityJet {
    u: Point,
    grad: [Point; 2],
    lap: Point,
}

fn velocity_jet(x: Point) -> VelocityJet {
    let (x, y) = (x[0], x[1]);
    let (g0, g1, g2) = g(x);
    let ym = y - 1.0;
    VelocityJet {
        u: [x * x * ym * ym + y, -2.0 / 3.0 * x * ym.powi(3) + g0],
        grad: [[2.0 * x * ym * ym, 2.0 * x * x * ym + 1.0], [-2.0 / 3.0 * ym.powi(3) + g1, -2.0 * x * ym * ym]],
        lap: [2.0 * ym * ym + 2.0 * x * x, g2 - 4.0 * x * ym],
    }
}

/// `(value, gradient, laplacian)` of the spatial fracture pressure factor.
fn fracture_jet(x: Point) -> (f64, Point, f64) {
    let (x, y) = (x[0], x[1]);
    let (g0, g1, g2) = g(x);
    let a = 1.0 - y - (PI * y).cos();
    let ay = -1.0 + PI * (PI * y).sin();
    let ayy = PI * PI * (PI * y).cos();
    (g0 * a, [g1 * a, g0 * ay], g2 * a + g0 * ayy)
}

/// Same for the matrix pressure factor `g(x) cos(pi (1 - y)) = -g(x) cos(pi y)`.
fn matrix_jet(x: Point) -> (f64, Point, f64) {
    let (x, y) = (x[0], x[1]);
    let (g0, g1, g2) = g(x);
    let a = (PI * (1.0 - y)).cos();
    let ay = PI * (PI * (1.0 - y)).sin();
    let ayy = -PI * PI * (PI * (1.0 - y)).cos();
    (g0 * a, [g1 * a, g0 * ay], g2 * a + g0 * ayy)
}

impl MmsProblem {
    pub fn new(params: PhysParams) -> Self {
        MmsProblem { params, ..Default::default() }
    }

    fn time_factor(&self, t: f64) -> (f64, f64) {
        (self.scale * t.cos(), -self.scale * t.sin())
    }

    /// `(f_c, f_d, f_m)` at one space-time point.
    pub fn forcing(&self, x: Point, t: f64) -> (Point, f64, f64) {
        (self.forcing_conduit(x, t), self.forcing_fracture(x, t), self.forcing_matrix(x, t))
    }
}

impl ExactSolution for MmsProblem {
    fn u_c(&self, x: Point, t: f64) -> Point {
        let (c, _) = self.time_factor(t);
        let j = velocity_jet(x);
        [c * j.u[0], c * j.u[1]]
    }

    fn grad_u_c(&self, x: Point, t: f64) -> [Point; 2] {
        let (c, _) = self.time_factor(t);
        let j = velocity_jet(x);
        j.grad.map(|r| [c * r[0], c * r[1]])
    }

    fn p_c(&self, x: Point, t: f64) -> f64 {
        let (c, _) = self.time_factor(t);
        c * g(x[0]).0 * (0.5 * PI * x[1]).sin()
    }

    fn phi_f(&self, x: Point, t: f64) -> f64 {
        self.time_factor(t).0 * fracture_jet(x).0
    }

    fn phi_m(&self, x: Point, t: f64) -> f64 {
        self.time_factor(t).0 * matrix_jet(x).0
    }

    fn u_f(&self, x: Point, t: f64) -> Point {
        let k = -self.params.k_f / self.params.mu * self.time_factor(t).0;
        let gr = fracture_jet(x).1;
        [k * gr[0], k * gr[1]]
    }

    fn u_m(&self, x: Point, t: f64) -> Point {
        let k = -self.params.k_m / self.params.mu * self.time_factor(t).0;
        let gr = matrix_jet(x).1;
        [k * gr[0], k * gr[1]]
    }
}

impl FlowProblem for MmsProblem {
    fn params(&self) -> &PhysParams {
        &self.params
    }

    fn forcing_conduit(&self, x: Point, t: f64) -> Point {
        let p = &self.params;
        let (c, dc) = self.time_factor(t);
        let j = velocity_jet(x);
        let (g0, g1, _) = g(x[0]);
        let grad_p = [g1 * (0.5 * PI * x[1]).sin(), g0 * 0.5 * PI * (0.5 * PI * x[1]).cos()];
        let mut f = [0.0; 2];
        for i in 0..2 {
            let conv = j.u[0] * j.grad[i][0] + j.u[1] * j.grad[i][1];
            f[i] = dc * j.u[i] - p.nu * c * j.lap[i] + c * grad_p[i] + c * c * conv;
        }
        f
    }

    fn forcing_fracture(&self, x: Point, t: f64) -> f64 {
        let p = &self.params;
        let (c, dc) = self.time_factor(t);
        let (ff, _, lf) = fracture_jet(x);
        let (fm, _, _) = matrix_jet(x);
        p.eta_f * p.c_ft * dc * ff - p.k_f / p.mu * c * lf + p.sigma * p.k_m / p.mu * c * (ff - fm)
    }

    fn forcing_matrix(&self, x: Point, t: f64) -> f64 {
        let p = &self.params;
        let (c, dc) = self.time_factor(t);
        let (ff, _, _) = fracture_jet(x);
        let (fm, _, lm) = matrix_jet(x);
        p.eta_m * p.c_mt * dc * fm - p.k_m / p.mu * c * lm + p.sigma * p.k_m / p.mu * c * (fm - ff)
    }

    fn conduit_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<BoundaryDatum> {
        match label {
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            _ => Ok(BoundaryDatum::Velocity(self.u_c(x, t))),
        }
    }

    fn fracture_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<Point> {
        match label {
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            _ => Ok(self.u_f(x, t)),
        }
    }

    fn matrix_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<Point> {
        match label {
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            _ => Ok(self.u_m(x, t)),
        }
    }

    fn initial_conduit_velocity(&self, x: Point) -> Point {
        self.u_c(x, 0.0)
    }
    fn initial_conduit_pressure(&self, x: Point) -> f64 {
        self.p_c(x, 0.0)
    }
    fn initial_fracture_velocity(&self, x: Point) -> Point {
        self.u_f(x, 0.0)
    }
    fn initial_fracture_pressure(&self, x: Point) -> f64 {
        self.phi_f(x, 0.0)
    }
    fn initial_matrix_velocity(&self, x: Point) -> Point {
        self.u_m(x, 0.0)
    }
    fn initial_matrix_pressure(&self, x: Point) -> f64 {
        self.phi_m(x, 0.0)
    }
}

/// Problem with zero sources, zero boundary data and zero initial state.
#[derive(Clone, Debug, Default)]
pub struct ZeroProblem {
    pub params: PhysParams,
}

impl FlowProblem for ZeroProblem {
    fn params(&self) -> &PhysParams {
        &self.params
    }
    fn conduit_boundary(&self, _x: Point, _t: f64, label: BoundaryLabel) -> Result<BoundaryDatum> {
        match label {
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            _ => Ok(BoundaryDatum::Velocity([0.0, 0.0])),
        }
    }
    fn fracture_boundary(&self, _x: Point, _t: f64, label: BoundaryLabel) -> Result<Point> {
        match label {
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            _ => Ok([0.0, 0.0]),
        }
    }
    fn matrix_boundary(&self, x: Point, t: f64, label: BoundaryLabel) -> Result<Point> {
        self.fracture_boundary(x, t, label)
    }
}

/// Injection / production wellbore configuration.
#[derive(Clone, Debug)]
pub struct WellboreScenario {
    pub geometry: WellboreGeometry,
    pub params: PhysParams,
    /// Boundary speed of the fracture flow on the exterior segments.
    pub fracture_speed: f64,
    /// Boundary speed of the matrix flow on the exterior segments.
    pub theta: f64,
    pub final_time: f64,
    pub dt: f64,
    pub h: f64,
}

impl Default for WellboreScenario {
    fn default() -> Self {
        WellboreScenario {
            geometry: WellboreGeometry::default(),
            params: PhysParams {
                nu: 1e-2,
                mu: 1e-2,
                rho: 1.0,
                sigma: 0.9,
                alpha: 1.0,
                eta_f: 1e-4,
                eta_m: 1e-2,
                c_ft: 1e-5,
                c_mt: 1e-5,
                k_f: 1e-4,
                k_m: 1e-8,
                gamma: 10.0,
            },
            fracture_speed: 0.5,
            theta: 1e-3,
            final_time: 5.0,
            dt: 0.01,
            h: 1.0 / 32.0,
        }
    }
}

impl WellboreScenario {
    /// Unit direction of the prescribed exterior velocity on segment `seg`
    /// (bottom, right, right-well wall, top, left).
    pub fn segment_direction(seg: u8) -> Option<Point> {
        match seg {
            1 => Some([0.0, 1.0]),
            2 | 3 => Some([-1.0, 0.0]),
            4 => Some([0.0, -1.0]),
            5 => Some([1.0, 0.0]),
            _ => None,
        }
    }

    pub fn inflow_profile(&self, x: Point) -> Point {
        let w = self.geometry.left_well_width;
        // 64 x (0.25 - x) for the default width, peak 1 at the well center.
        [0.0, -4.0 / (w * w) * x[0] * (w - x[0])]
    }

    fn exterior(&self, label: BoundaryLabel, speed: f64) -> Result<Point> {
        match label {
            BoundaryLabel::PorousExterior(seg) => {
                let d = Self::segment_direction(seg)
                    .ok_or_else(|| Error::Parameter(format!("unknown porous boundary segment {seg}")))?;
                Ok([speed * d[0], speed * d[1]])
            }
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            other => Err(Error::Parameter(format!("{other:?} is not a porous boundary"))),
        }
    }
}

impl FlowProblem for WellboreScenario {
    fn params(&self) -> &PhysParams {
        &self.params
    }

    fn conduit_boundary(&self, x: Point, _t: f64, label: BoundaryLabel) -> Result<BoundaryDatum> {
        match label {
            BoundaryLabel::Interface => Err(Error::InterfaceData),
            BoundaryLabel::ConduitInflow => Ok(BoundaryDatum::Velocity(self.inflow_profile(x))),
            BoundaryLabel::ConduitOutflow => Ok(BoundaryDatum::DoNothing),
            _ => Ok(BoundaryDatum::Velocity([0.0, 0.0])),
        }
    }

    fn fracture_boundary(&self, _x: Point, _t: f64, label: BoundaryLabel) -> Result<Point> {
        self.exterior(label, self.fracture_speed)
    }

    fn matrix_boundary(&self, _x: Point, _t: f64, label: BoundaryLabel) -> Result<Point> {
        self.exterior(label, self.theta)
    }
}
