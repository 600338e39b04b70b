//! Product integrals on matrix Lie groups, adjoint transport, and sample-based
//! certification of seminorm estimates.

pub mod adjoint;
pub mod approx;
pub mod composition;
pub mod curve;
pub mod error;
pub mod estimates;
pub mod evolution;
pub mod lie;
pub mod norms;
pub mod quadrature;
pub mod sampling;
pub mod suite;

pub use curve::{Curve, CurveSpec, Order, Side, TrigTerm};
pub use error::{LabError, Result};
pub use lie::{AlgebraElement, GroupElement, LieContext, Matrix, Membership};
pub use norms::{NormKind, Seminorm, SeminormFamily};
