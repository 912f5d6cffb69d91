//! Kinetic Fokker–Planck model in one space and one velocity dimension,
//!
//! `∂f/∂t + v ∂f/∂x = ∂/∂v (H(W⊛f) v f + ½ ∂/∂v (G(W⊛f)² f))`,
//!
//! solved by Strang splitting: superbee-limited upwind transport in `x` and a
//! conservative backward-Euler convection–diffusion step in `v` with no-flux
//! walls.

mod phase;
mod solver;

pub use phase::{maxwellian, moments, Moments, PhaseField, SampledMaxwellian};
pub use solver::{
    momentum_energy_balance, perceived_density_field, run_kinetic, strang_step, transport_halfstep,
    velocity_step, BalanceReport, KineticConfig, KineticRun, KineticSolver, MomentRecord,
};
