//! Cost functionals, Hamiltonians and perturbation checks of optimality.
//!
//! Costs are the lattice functionals whose first-order conditions are the
//! discrete systems solved elsewhere: controls act on `[t_k, t_{k+1})`, the
//! running state cost is charged at `t_{k+1}`, and the terminal cost at the
//! leaves. Minor primitives are the quadratics `½⟨x, c x⟩ + ⟨h, x⟩` with zero
//! constant term.

mod cost;
mod hamiltonian;
mod perturbation;

pub use cost::{cost_major, cost_mfg, cost_minor, major_cost_along};
pub use hamiltonian::{
    major_hamiltonian, major_minimizer, mfg_hamiltonian, mfg_minimizer, minor_hamiltonian, minor_minimizer,
    MfgPoint, NAgentPoint,
};
pub use perturbation::{
    perturbation_test, random_direction, Level, PerturbationOptions, PerturbationReport, QuadraticFit,
};

#[cfg(test)]
mod tests;
