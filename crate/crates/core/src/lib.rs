//! Input-output feedback linearization of affine nonlinear systems with
//! possibly more outputs than inputs, applied to longitudinal aircraft flight.

// `!(x > 0.0)` guards reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod aircraft;
pub mod iol;
pub mod linalg;
pub mod scenario;
pub mod sim;
pub mod trim;

pub use affine::{AffineError, AffineSystem, RelativeDegreeProfile};
pub use iol::{ChainFeedback, CompanionForm, IolError, LambdaSnapshot, LinearizingController, OuterLoop};
pub use linalg::{pseudo_inverse, DEFAULT_PINV_TOL};
