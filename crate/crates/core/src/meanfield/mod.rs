//! First-order mean-field model: `∂ρ/∂t = ½Δ(G(W∗ρ)²ρ)` on a periodic grid.

mod convolution;
mod field;
pub mod linalg;
mod scheme;

pub use convolution::{convolve_periodic, convolve_periodic_fft, PeriodicConvolution};
pub use field::{aggregate_count, aggregate_count_2d, periodic_local_maxima, random_initial_field, DensityField};
pub use scheme::{
    assemble_semi_implicit, run_pde, step_pde, PdeRun, PdeSimConfig, PdeStepper, SemiImplicitSystem,
};
