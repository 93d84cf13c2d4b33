//! Numerical toolkit for Poiseuille flow of nematic liquid crystals in the
//! Ericksen-Leslie model: a coupled finite-difference solver, a characteristic
//! solver for the director wave equation that continues through cusps, the
//! parametrix representation of the variable-coefficient parabolic problems,
//! the fixed-point map on the flux `J`, and run diagnostics.

pub mod characteristic;
pub mod coefficients;
pub mod diagnostics;
pub mod direct;
pub mod error;
pub mod fixed_point;
pub mod grid;
pub mod kernel;
pub mod state;

pub use coefficients::{CoefficientFunctions, LeslieCoefficients, ValidationReport};
pub use error::{Error, Result};
pub use grid::{BoundaryMode, Grid1D, SpaceTimeField};
pub use state::{make_state, InitialData, PhysicalState};
