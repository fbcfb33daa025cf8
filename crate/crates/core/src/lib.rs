//! Spectral and Monte Carlo machinery for backward-in-time incompressible
//! flow problems on the periodic torus.
//!
//! The crate is organized around a small field algebra ([`fields`]) on a
//! periodic grid, on top of which sit:
//!
//! * [`stochastic`] — seeded splittable random streams, Gaussian sampling,
//!   quadrature for singular time integrals and deterministic Monte Carlo
//!   reductions with error bars;
//! * [`leray`] — the Leray–Hodge projection and the nonlocal pressure
//!   operator `∇(−Δ)⁻¹ div div(φ⊗ψ)`, both as exact Fourier multipliers and
//!   as Brownian-functional Monte Carlo estimators;
//! * [`heat`] — the heat semigroup, spectral and Feynman–Kac forms;
//! * [`burgers`] — a mild (Duhamel) fixed-point solver for PDEs of Burgers'
//!   type with a Cole–Hopf oracle and FBSDE-based diagnostics;
//! * [`navier_stokes`] — the truncated mild solver for the backward
//!   Navier–Stokes equation plus convergence and monotonicity studies;
//! * [`fbscheme`] — an explicit grid forward-backward time-stepping scheme
//!   cross-validating the mild solver;
//! * [`lagrangian`] — stochastic flow maps with Jacobian transport and the
//!   magnetization-variable representation of the velocity.
//!
//! All operations are pure functions over immutable fields; every stochastic
//! routine is bit-reproducible for a fixed seed independently of thread
//! count.

pub mod burgers;
mod error;
pub mod fbscheme;
pub mod fields;
pub mod heat;
pub mod lagrangian;
pub mod leray;
pub mod navier_stokes;
pub mod presets;
pub mod stochastic;

pub use error::{Error, Result};
