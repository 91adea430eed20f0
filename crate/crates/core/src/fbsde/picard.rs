use super::{backward_sweep, check_lattice, forward_sweep, residual, FbsdeSystem, NodeSolution, SolveDiagnostics, SolveMethod};
use crate::error::{Error, Result};
use crate::scenario::{NodeField, NoiseLattice};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions {
    /// Weight of the new sweep, in (0, 1].
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iter: 500 }
    }
}

/// Damped fixed-point iteration on the backward field: forward sweep under the
/// current backward field, backward sweep from the new forward field, then
/// `B ← θ·sweep + (1−θ)·B` until successive iterates differ by at most `tol`.
pub fn solve_picard<S: FbsdeSystem + ?Sized>(system: &S, lattice: &NoiseLattice, options: PicardOptions) -> Result<NodeSolution> {
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::Validation(format!("damping {} is outside (0, 1]", options.damping)));
    }
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::Validation("Picard needs tol > 0 and max_iter >= 1".into()));
    }
    check_lattice(lattice)?;
    let theta = options.damping;
    let mut backward = NodeField::zeros(lattice.len(), system.backward_dim());
    let mut last = f64::INFINITY;
    for it in 1..=options.max_iter {
        let forward = forward_sweep(system, lattice, &backward);
        let (sweep, _) = backward_sweep(system, lattice, &forward);
        let mut diff = 0.0f64;
        for (b, s) in backward.as_mut_slice().iter_mut().zip(sweep.as_slice()) {
            let next = theta * s + (1.0 - theta) * *b;
            diff = diff.max((next - *b).abs());
            *b = next;
        }
        if !diff.is_finite() {
            return Err(Error::NotConverged { iterations: it, last_update: diff });
        }
        last = diff;
        if diff <= options.tol {
            let forward = forward_sweep(system, lattice, &backward);
            let (_, increments) = backward_sweep(system, lattice, &forward);
            let mut solution = NodeSolution {
                forward,
                backward,
                increments,
                diagnostics: SolveDiagnostics {
                    method: SolveMethod::Picard,
                    iterations: it,
                    max_equation_residual: 0.0,
                    terminal_mismatch: 0.0,
                    // Backward rows are off by at most the last update / θ.
                    tolerance: 10.0 * options.tol / theta,
                    converged: true,
                },
            };
            solution.diagnostics = residual(system, lattice, &solution);
            return Ok(solution);
        }
    }
    Err(Error::NotConverged { iterations: options.max_iter, last_update: last })
}
