//! Wasserstein distances, the ε_N rate, price-gap functionals and the
//! convergence and stability studies.

mod assignment;
mod study;
mod wasserstein;

pub use assignment::min_cost_assignment;
pub use study::{
    convergence_study, stability_gap, ConvergenceReport, ConvergenceRow, ConvergenceSummary, DeltaTerms,
    InequalityCheck, SlopeFit, StabilityReport, WassersteinTerms,
};
pub use wasserstein::{
    wasserstein1_1d, wasserstein2, wasserstein2_assignment, wasserstein2_weighted_squared, EmpiricalMeasure, MAX_ATOMS,
};

use crate::error::{Error, Result};
use crate::scenario::{NodeField, NoiseLattice};

/// Glivenko–Cantelli rate `N^{−2/max(n,4)}·(1 + ln N·1_{N=4})`.
pub fn epsilon_rate(agents: usize, n: usize) -> f64 {
    let nf = agents as f64;
    let log = if agents == 4 { 1.0 + nf.ln() } else { 1.0 };
    nf.powf(-2.0 / n.max(4) as f64) * log
}

/// `E ∫ |a − b|² dt` on the lattice: probability- and Δt-weighted squared
/// differences over non-terminal nodes.
pub fn price_gap(a: &NodeField, b: &NodeField, lattice: &NoiseLattice) -> Result<f64> {
    if a.nodes() != lattice.len() || b.nodes() != lattice.len() || a.dim() != b.dim() {
        return Err(Error::Validation(format!(
            "price fields ({} x {}, {} x {}) do not live on a lattice of {} nodes",
            a.nodes(),
            a.dim(),
            b.nodes(),
            b.dim(),
            lattice.len()
        )));
    }
    let dt = lattice.dt();
    Ok(lattice
        .non_terminal()
        .map(|v| {
            let d: f64 = a.get(v).iter().zip(b.get(v)).map(|(x, y)| (x - y) * (x - y)).sum();
            lattice.probability(v) * dt * d
        })
        .sum())
}
