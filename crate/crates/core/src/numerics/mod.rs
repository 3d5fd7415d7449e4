//! Numerical foundations: arbitrary-precision scalars, truncated jets in
//! one to three variables, and small dense linear solvers.

pub mod bigfloat;
pub mod jet1;
pub mod jet2;
pub mod jet3;
pub mod linalg;
pub mod scalar;

pub use bigfloat::{ctx_digits, with_digits, BigFloat, PrecisionGuard, DEFAULT_DIGITS};
pub use jet1::Jet1;
pub use jet2::{Jet2, Jet2Map};
pub use jet3::{solve_implicit, Jet3};
pub use scalar::{rational, Scalar};
