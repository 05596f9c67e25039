//! Decoupled multirate characteristic finite-element solver for coupled
//! free flow (Navier-Stokes) over a dual-porosity medium.

pub mod assembly;
pub mod characteristics;
pub mod error;
pub mod experiments;
pub mod fespace;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod postprocess;
pub mod quadrature;
pub mod stepper;

pub use error::{Error, Result};
pub use assembly::PhysParams;
pub use fespace::FeSpaces;
pub use mesh::Mesh;
pub use mms::{MmsProblem, WellboreScenario};
pub use stepper::{ConduitScheme, State, Stepper, StepperOptions, TimeGrid};
