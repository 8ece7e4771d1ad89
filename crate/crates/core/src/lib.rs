//! Stability analysis of Riemann shocks in one-dimensional hyperbolic
//! systems of balance laws
//!
//! ```text
//!   U_t + A(U)_x = g(U)
//! ```
//!
//! The crate checks the spectral hypotheses (high-frequency damping,
//! Evans–Lopatinskii conditions, simplicity of the translational eigenvalue),
//! builds Green kernels with their transported singular parts, evaluates
//! hypocoercive energies, runs shock-fitted simulations, and reproduces the
//! separation between spectral stability and dissipative symmetrizability.

pub mod energy;
pub mod error;
pub mod green;
pub mod linalg;
pub mod lopatinskii;
pub mod ratpoly;
pub mod simulate;
pub mod spectral;
pub mod symmetrizer;
pub mod system_model;

pub use error::{Error, Result};
