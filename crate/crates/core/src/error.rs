use thiserror::Error;

use crate::mesh::Subdomain;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("unsupported quadrature degree {0} (supported: 1..=10)")]
    QuadratureDegree(usize),

    #[error("sparse index ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear solve failed: relative residual {residual:.3e}")]
    SolveFailed { residual: f64 },

    #[error("element {element} belongs to {actual:?}, expected {expected:?}")]
    SubdomainMismatch {
        element: usize,
        expected: Subdomain,
        actual: Subdomain,
    },

    #[error("point ({0}, {1}) could not be located in the mesh")]
    PointNotFound(f64, f64),

    #[error("conflicting Dirichlet values for dof {dof}: {first} vs {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },

    #[error("field time label {found} does not match the expected time {expected}")]
    TimeMismatch { expected: f64, found: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("the interface is not a data boundary")]
    InterfaceData,

    #[error("Newton iteration did not converge; residual history {history:?}")]
    NewtonDiverged { history: Vec<f64> },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("{context}: {source}")]
    Step {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_step(self, context: impl Into<String>) -> Self {
        Error::Step {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips step context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
