//! Pseudo-spectral simulation of the forced sub-critical SQG equation
//!
//! ```text
//! θ_t + u_θ·∇θ + Λ^α θ = f,     u_θ = Λ^{-1}(-∂₂θ, ∂₁θ),     1 < α < 2
//! ```
//!
//! on a periodic box standing in for the plane, together with the tools used
//! to check its long-time behavior: small steady states, the perturbation
//! equation, the self-similar frame and decay-rate fitting.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dump;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod presets;
pub mod scaled;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use field::{Field, VectorField};
pub use grid::{Grid, GridSpec, ModelParams};
pub use rustfft::num_complex::Complex64;
