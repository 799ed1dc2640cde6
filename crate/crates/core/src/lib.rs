//! Numerical laboratory for equivariant wave maps into the two-sphere:
//! soliton profiles, the linearized operator pair, modulation diagnostics
//! for the concentration dynamics, and the reduced blowup ODE.

pub mod config;
pub mod error;
pub mod evolve;
pub mod functionals;
pub mod grid;
pub mod modulation;
pub mod odelab;
pub mod operators;
pub mod output;
pub mod profiles;

pub use error::{Error, Result};
pub use evolve::FieldState;
pub use functionals::{PaperConstants, QuadratureScheme};
pub use grid::RadialGrid;
pub use profiles::{HomotopyClass, SolitonProfile};
