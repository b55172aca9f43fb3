//! Backward marching solvers for decoupled forward-backward SDEs
//!
//! ```text
//! dX = b(t, X) dt + sigma(t, X) dW,            X_0 = x0
//! -dY = f(t, X, Y, Z) dt - Z dW,               Y_T = Phi(X_T)
//! ```
//!
//! with a split generator `f = f1 + f2`. The splitting schemes alternate
//! which part is implicit from one time level to the next; a trapezoidal
//! scheme is kept as a reference. Conditional expectations use tensor
//! Gauss-Hermite quadrature and off-grid values come from cubic splines.

pub mod backward;
pub mod error;
pub mod forward;
pub mod harness;
pub mod interp;
pub mod model;
pub mod par;
pub mod problems;
pub mod quadrature;

pub use error::{Error, Result};
