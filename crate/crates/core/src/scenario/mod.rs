//! Discrete-noise scenario lattices, exogenous node fields and idiosyncratic
//! sampling.

mod exogenous;
mod lattice;
mod sampling;

pub use exogenous::{evaluate_exogenous, Exogenous};
pub use lattice::{
    build_lattice, build_lattice_with_budget, NodeField, NoiseLattice, TimeGrid, DEFAULT_NODE_BUDGET,
};
pub use sampling::{agent_rng, mix_seed, sample_idiosyncratic, DEFAULT_SEED};
