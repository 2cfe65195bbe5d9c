//! Iterated vector fields: conservatism checks, exact polynomial
//! computations, GLM closed forms, spectral bounds and FedAvg simulation.

pub mod config;
pub mod conservatism;
pub mod error;
pub mod expr;
pub mod fedsim;
pub mod field;
pub mod glm;
pub mod linalg;
pub mod poly;
pub mod quadrature;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{FieldDef, FieldKind, JacobianMethod, ScalarFn};
pub use glm::{Activation, GlmSpec};
pub use linalg::{Matrix, Vector};
pub use poly::{PolyField, RationalPoly};
