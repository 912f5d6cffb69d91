//! Simulation and analysis of direct aggregation: particles that cluster only
//! because their random motion slows down where they perceive a crowd.
//!
//! The crate contains
//!
//! * [`particles`]: Euler–Maruyama integration of the first-order (position
//!   random walk) and second-order (damped velocity random walk) individual
//!   based models on a periodic torus, with a cell-list neighbour search and
//!   cluster diagnostics;
//! * [`meanfield`]: a semi-implicit finite-difference solver for the nonlocal
//!   degenerate diffusion `∂ρ/∂t = ½Δ(G(W∗ρ)²ρ)` in 1D and 2D;
//! * [`kinetic`]: a Strang-split solver for the kinetic Fokker–Planck
//!   equation in 1D space × 1D velocity;
//! * [`stability`]: Fourier growth rates of perturbed constant states;
//! * [`io`]: run configuration, orchestration and CSV/PGM output.
//!
//! [`geometry`], [`kernel`] and [`response`] hold the pieces shared by all of
//! the above.

pub mod error;
pub mod geometry;
pub mod io;
pub mod kernel;
pub mod kinetic;
pub mod meanfield;
pub mod particles;
pub mod response;
pub mod stability;

pub use error::{Error, Result};
pub use geometry::{TorusGeometry, Vec2};
pub use kernel::{Cone, KernelSpec, Normalization, Profile};
pub use response::{Response, ResponseFunctions};
