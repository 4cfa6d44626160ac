//! Resource quantifiers for quantum states, channels and channel tuples.
//!
//! Generalised robustness, weight and max-relative entropy with respect to
//! convex free sets, computed by semidefinite programming, together with
//! discrimination and exclusion games derived from the optimal witnesses and
//! a truncation scheme that approximates infinite-dimensional objects.

pub mod approx;
pub mod error;
pub mod freesets;
pub mod games;
pub mod linalg;
pub mod measures;
pub mod quantum;
pub mod sdp;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, HermitianMatrix, C64};
pub use quantum::{ChoiChannel, DensityMatrix, Povm};
