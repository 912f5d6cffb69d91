//! Individual based models on the periodic torus.

mod cell_list;
mod clusters;
mod density;
mod ensemble;
mod sim;

pub use cell_list::{build_cell_list, CellIndex};
pub use clusters::{cluster_count, ClusterSummary, DisjointSet};
pub use density::{perceived_density_all, perceived_density_naive, perceived_density_with_cells};
pub use ensemble::{init_uniform, ModelOrder, ParticleEnsemble};
pub use sim::{
    run_from, run_particles, step_first_order, step_second_order, ParticleSimConfig, Snapshot,
};
