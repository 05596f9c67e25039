//! Quadrature on the reference triangle and on segments.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules, so every degree from 1 to 10 is available from one construction.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Barycentric coordinates `(l0, l1, l2)` of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights on the reference triangle (they sum to 1/2).
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

pub fn make_line_rule(exact_degree: usize) -> Result<LineRule> {
    if !(1..=10).contains(&exact_degree) {
        return Err(Error::QuadratureDegree(exact_degree));
    }
    let m = exact_degree / 2 + 1;
    let (x, w) = gauss_legendre(m);
    Ok(LineRule {
        points: x.iter().map(|&z| 0.5 * (z + 1.0)).collect(),
        weights: w.iter().map(|&v| 0.5 * v).collect(),
        exact_degree,
    })
}

pub fn make_quadrature(exact_degree: usize) -> Result<QuadratureRule> {
    if !(1..=10).contains(&exact_degree) {
        return Err(Error::QuadratureDegree(exact_degree));
    }
    // The collapsed integrand has degree d + 1 in the radial variable.
    let m = (exact_degree + 1) / 2 + 1;
    let (x, w) = gauss_legendre(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (i, &zu) in x.iter().enumerate() {
        for (j, &zv) in x.iter().enumerate() {
            let u = 0.5 * (zu + 1.0);
            let v = 0.5 * (zv + 1.0);
            let xi = u * (1.0 - v);
            let eta = v;
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(0.25 * w[i] * w[j] * (1.0 - v));
        }
    }
    Ok(QuadratureRule { points, weights, exact_degree })
}

/// Rules used throughout: assembly, edge integrals, and error norms.
#[derive(Clone, Debug)]
pub struct RuleSet {
    pub assembly: QuadratureRule,
    pub convection: QuadratureRule,
    pub error: QuadratureRule,
    pub edge: LineRule,
    pub edge_fine: LineRule,
}

impl RuleSet {
    pub fn standard() -> Self {
        RuleSet {
            assembly: make_quadrature(6).unwrap(),
            convection: make_quadrature(8).unwrap(),
            error: make_quadrature(8).unwrap(),
            edge: make_line_rule(4).unwrap(),
            edge_fine: make_line_rule(8).unwrap(),
        }
    }
}
