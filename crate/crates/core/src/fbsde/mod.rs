//! Coupled forward-backward systems on a [`NoiseLattice`]: one-step backward
//! induction, a direct sparse solve for affine systems and damped Picard
//! iteration.
//!
//! Discretization: forward states step with explicit Euler using the drift at
//! the parent node, `F_c = F_v + Δt·b(v, F_v, B_v) + σ_v·ΔW_c`. Backward states
//! satisfy `B_v = Σ_c p_c (B_c + Δt·g(c, F_c))`, with `B = h(F)` on leaves.

mod direct;
mod picard;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{NodeField, NoiseLattice};

pub use direct::{solve_direct, MAX_UNKNOWNS};
pub use picard::{solve_picard, PicardOptions};

/// A forward-backward system. Node indices refer to the lattice the system
/// was built for.
pub trait FbsdeSystem: Sync {
    fn forward_dim(&self) -> usize;
    fn backward_dim(&self) -> usize;
    /// True when drift, driver and terminal map are affine in the states.
    fn is_affine(&self) -> bool;
    fn initial(&self, out: &mut [f64]);
    /// Forward drift at `node`.
    fn drift(&self, node: usize, fwd: &[f64], bwd: &[f64], out: &mut [f64]);
    /// Additive noise on the step out of `node` for common increment `dw`.
    fn noise(&self, node: usize, dw: &[f64], out: &mut [f64]);
    /// Backward driver at `node`; depends on forward states only.
    fn driver(&self, node: usize, fwd: &[f64], out: &mut [f64]);
    /// Terminal condition at a leaf.
    fn terminal(&self, node: usize, fwd: &[f64], out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Direct,
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    pub iterations: usize,
    pub max_equation_residual: f64,
    pub terminal_mismatch: f64,
    /// Residual bound behind `converged`.
    pub tolerance: f64,
    pub converged: bool,
}

/// Node fields of a solved system plus martingale increments.
#[derive(Clone, Debug)]
pub struct NodeSolution {
    pub forward: NodeField,
    pub backward: NodeField,
    /// Per node, `children × backward_dim` deviations of `B_c + Δt·g(c, F_c)`
    /// from their conditional mean (zero on leaves).
    pub increments: NodeField,
    pub diagnostics: SolveDiagnostics,
}

impl NodeSolution {
    /// Martingale-representation estimate `Σ_c p_c·dev_c·ΔW_cᵀ / Δt`,
    /// `backward_dim × d0` row-major.
    pub fn z(&self, lattice: &NoiseLattice, node: usize) -> Vec<f64> {
        let bd = self.backward.dim();
        let d0 = lattice.d0();
        let mut z = vec![0.0; bd * d0];
        if lattice.is_terminal(node) {
            return z;
        }
        let inc = self.increments.get(node);
        for (s, c) in lattice.children(node).enumerate() {
            let p = lattice.conditional_probability(c);
            let dw = lattice.increment(c);
            for i in 0..bd {
                for q in 0..d0 {
                    z[i * d0 + q] += p * inc[s * bd + i] * dw[q] / lattice.dt();
                }
            }
        }
        z
    }

    /// Largest probability-weighted sum of martingale increments.
    pub fn martingale_defect(&self, lattice: &NoiseLattice) -> f64 {
        let bd = self.backward.dim();
        let mut worst = 0.0f64;
        for v in lattice.non_terminal() {
            let inc = self.increments.get(v);
            for i in 0..bd {
                let s: f64 = lattice.children(v).enumerate().map(|(s, c)| lattice.conditional_probability(c) * inc[s * bd + i]).sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }
}

/// One conditional-expectation step: `node = Σ p·child + Δt·driver`, plus
/// the child deviations from the conditional mean. `child_values` holds one
/// block of `driver.len()` values per child.
pub fn backward_step(probs: &[f64], child_values: &[f64], driver: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let bd = driver.len();
    if child_values.len() != probs.len() * bd {
        return Err(Error::Validation("child values do not cover every child".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Lattice(format!("child probabilities sum to {total}")));
    }
    let mut mean = vec![0.0; bd];
    for (s, p) in probs.iter().enumerate() {
        for i in 0..bd {
            mean[i] += p * child_values[s * bd + i];
        }
    }
    let increments = (0..probs.len()).flat_map(|s| (0..bd).map(move |i| (s, i))).map(|(s, i)| child_values[s * bd + i] - mean[i]).collect();
    let node = mean.iter().zip(driver).map(|(m, g)| m + dt * g).collect();
    Ok((node, increments))
}

pub(crate) fn check_lattice(lattice: &NoiseLattice) -> Result<()> {
    for v in lattice.non_terminal().take(1) {
        let total: f64 = lattice.children(v).map(|c| lattice.conditional_probability(c)).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Lattice(format!("child probabilities at node {v} sum to {total}")));
        }
    }
    Ok(())
}

/// Forward sweep: integrate the forward states given a backward field.
pub(crate) fn forward_sweep<S: FbsdeSystem + ?Sized>(system: &S, lattice: &NoiseLattice, backward: &NodeField) -> NodeField {
    let fd = system.forward_dim();
    let dt = lattice.dt();
    let mut forward = NodeField::zeros(lattice.len(), fd);
    system.initial(forward.get_mut(0));
    for k in 0..lattice.steps() {
        let parents = lattice.level_nodes(k);
        let next = lattice.level_nodes(k + 1);
        let fwd_ref = &forward;
        let blocks: Vec<Vec<f64>> = parents
            .into_par_iter()
            .map(|v| {
                let mut drift = vec![0.0; fd];
                system.drift(v, fwd_ref.get(v), backward.get(v), &mut drift);
                let mut out = Vec::with_capacity(fd * lattice.children_per_node());
                let mut noise = vec![0.0; fd];
                for c in lattice.children(v) {
                    system.noise(v, lattice.increment(c), &mut noise);
                    out.extend((0..fd).map(|i| fwd_ref.get(v)[i] + dt * drift[i] + noise[i]));
                }
                out
            })
            .collect();
        let dst = &mut forward.as_mut_slice()[next.start * fd..next.end * fd];
        let mut off = 0;
        for b in blocks {
            dst[off..off + b.len()].copy_from_slice(&b);
            off += b.len();
        }
    }
    forward
}

/// Backward sweep: recompute the backward field and increments from a forward field.
pub(crate) fn backward_sweep<S: FbsdeSystem + ?Sized>(system: &S, lattice: &NoiseLattice, forward: &NodeField) -> (NodeField, NodeField) {
    let bd = system.backward_dim();
    let ch = lattice.children_per_node();
    let dt = lattice.dt();
    let mut backward = NodeField::zeros(lattice.len(), bd);
    let mut increments = NodeField::zeros(lattice.len(), bd * ch);
    let leaves = lattice.terminal_nodes();
    let vals: Vec<Vec<f64>> = leaves
        .clone()
        .into_par_iter()
        .map(|v| {
            let mut out = vec![0.0; bd];
            system.terminal(v, forward.get(v), &mut out);
            out
        })
        .collect();
    for (v, val) in leaves.zip(vals) {
        backward.get_mut(v).copy_from_slice(&val);
    }
    let zero = vec![0.0; bd];
    for k in (0..lattice.steps()).rev() {
        let bref = &backward;
        let results: Vec<(Vec<f64>, Vec<f64>)> = lattice
            .level_nodes(k)
            .into_par_iter()
            .map(|v| {
                let mut probs = Vec::with_capacity(ch);
                let mut child_vals = Vec::with_capacity(ch * bd);
                let mut g = vec![0.0; bd];
                for c in lattice.children(v) {
                    probs.push(lattice.conditional_probability(c));
                    system.driver(c, forward.get(c), &mut g);
                    child_vals.extend(bref.get(c).iter().zip(&g).map(|(b, gi)| b + dt * gi));
                }
                backward_step(&probs, &child_vals, &zero, dt).expect("lattice probabilities checked")
            })
            .collect();
        for (v, (val, inc)) in lattice.level_nodes(k).zip(results) {
            backward.get_mut(v).copy_from_slice(&val);
            increments.get_mut(v).copy_from_slice(&inc);
        }
    }
    (backward, increments)
}

/// Recompute every discrete equation and report the largest violation.
pub fn residual<S: FbsdeSystem + ?Sized>(system: &S, lattice: &NoiseLattice, solution: &NodeSolution) -> SolveDiagnostics {
    let fd = system.forward_dim();
    let bd = system.backward_dim();
    let dt = lattice.dt();
    let f = &solution.forward;
    let b = &solution.backward;
    let mut init = vec![0.0; fd];
    system.initial(&mut init);
    let root = init.iter().zip(f.get(0)).fold(0.0f64, |m, (a, x)| m.max((a - x).abs()));
    let per_node: Vec<(f64, f64)> = (0..lattice.len())
        .into_par_iter()
        .map(|v| {
            let mut worst = 0.0f64;
            let mut term = 0.0f64;
            if lattice.is_terminal(v) {
                let mut h = vec![0.0; bd];
                system.terminal(v, f.get(v), &mut h);
                for i in 0..bd {
                    term = term.max((b.get(v)[i] - h[i]).abs());
                }
                worst = worst.max(term);
            } else {
                let mut drift = vec![0.0; fd];
                let mut noise = vec![0.0; fd];
                system.drift(v, f.get(v), b.get(v), &mut drift);
                let mut mean = vec![0.0; bd];
                let mut g = vec![0.0; bd];
                for c in lattice.children(v) {
                    system.noise(v, lattice.increment(c), &mut noise);
                    for i in 0..fd {
                        let r = f.get(c)[i] - f.get(v)[i] - dt * drift[i] - noise[i];
                        worst = worst.max(r.abs());
                    }
                    let p = lattice.conditional_probability(c);
                    system.driver(c, f.get(c), &mut g);
                    for i in 0..bd {
                        mean[i] += p * (b.get(c)[i] + dt * g[i]);
                    }
                }
                for i in 0..bd {
                    worst = worst.max((b.get(v)[i] - mean[i]).abs());
                }
            }
            (worst, term)
        })
        .collect();
    let (worst, term) = per_node.iter().fold((root, 0.0f64), |(w, t), (a, b)| (w.max(*a), t.max(*b)));
    let worst = if worst.is_nan() || per_node.iter().any(|(a, _)| a.is_nan()) { f64::NAN } else { worst };
    SolveDiagnostics {
        method: solution.diagnostics.method,
        iterations: solution.diagnostics.iterations,
        max_equation_residual: worst,
        terminal_mismatch: term,
        tolerance: solution.diagnostics.tolerance,
        converged: worst <= solution.diagnostics.tolerance,
    }
}

/// Residual below which a solve counts as converged.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_step_examples() {
        let (v, inc) = backward_step(&[0.5, 0.5], &[3.0, 3.0], &[0.0], 0.1).unwrap();
        assert_eq!(v, vec![3.0]);
        assert_eq!(inc, vec![0.0, 0.0]);
        let (v, inc) = backward_step(&[0.5, 0.5], &[2.0, 0.0], &[0.0], 0.1).unwrap();
        assert_eq!(v, vec![1.0]);
        assert_eq!(inc, vec![1.0, -1.0]);
        let (v, _) = backward_step(&[0.5, 0.5], &[2.0, 0.0], &[3.0], 0.1).unwrap();
        assert!((v[0] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn bad_probabilities_are_corruption() {
        assert!(matches!(backward_step(&[0.5, 0.4], &[1.0, 1.0], &[0.0], 0.1), Err(Error::Lattice(_))));
    }
}
