use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::cost::{cost_major, cost_mfg, cost_minor};
use crate::error::{Error, Result};
use crate::finite_market::solve_full_equilibrium;
use crate::linalg;
use crate::mean_field::solve_mfg;
use crate::model::ModelSpec;
use crate::scenario::{mix_seed, NodeField, NoiseLattice, DEFAULT_SEED};

/// Which control is perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// α̂ⁱ of one agent with the equilibrium price held fixed.
    Minor,
    /// Finite-N major flow, price re-cleared.
    MajorN,
    /// Mean-field major flow, price re-cleared.
    MajorMfg,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Minor => "minor",
            Level::MajorN => "major-n",
            Level::MajorMfg => "major-mfg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationOptions {
    pub directions: usize,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        Self { directions: 20, eps_grid: vec![-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2], seed: DEFAULT_SEED }
    }
}

/// Least-squares fit `ΔJ ≈ a₀ + a₁ε + a₂ε²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct QuadraticFit {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub level: Level,
    pub directions: usize,
    pub description: String,
    pub eps_grid: Vec<f64>,
    pub baseline: f64,
    /// `delta_j[d][e] = J(û + ε_e η_d) − J(û)`; `NaN` where the evaluation failed.
    pub delta_j: Vec<Vec<f64>>,
    pub failed: Vec<usize>,
    pub min_delta_j: f64,
    pub fits: Vec<QuadraticFit>,
    /// `max |a₁|`.
    pub gradient_norm: f64,
    /// `min a₂`.
    pub min_curvature: f64,
}

impl PerturbationReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "direction_id,eps,delta_J")?;
        for (d, row) in self.delta_j.iter().enumerate() {
            for (e, v) in self.eps_grid.iter().zip(row) {
                writeln!(w, "{d},{e},{v}")?;
            }
        }
        Ok(())
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.failed.is_empty() && self.min_delta_j >= -tol
    }
}

/// Adapted direction with i.i.d. uniform node values on `[−1, 1]`, zero on
/// terminal nodes, scaled to unit lattice L² norm `E Σ Δt |η|² = 1`.
pub fn random_direction(lattice: &NoiseLattice, dim: usize, seed: u64) -> NodeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eta = NodeField::zeros(lattice.len(), dim);
    let mut norm = 0.0;
    for v in lattice.non_terminal() {
        let row = eta.get_mut(v);
        for x in row.iter_mut() {
            *x = rng.random_range(-1.0..=1.0);
        }
        norm += lattice.probability(v) * lattice.dt() * linalg::dot(row, row);
    }
    let s = norm.sqrt();
    if s > 0.0 {
        eta.as_mut_slice().iter_mut().for_each(|x| *x /= s);
    }
    eta
}

fn shifted(base: &NodeField, eta: &NodeField, eps: f64) -> NodeField {
    let data = base.as_slice().iter().zip(eta.as_slice()).map(|(b, e)| b + eps * e).collect();
    NodeField::from_vec(base.dim(), data).expect("same shape")
}

fn fit_quadratic(eps: &[f64], dj: &[f64]) -> Option<QuadraticFit> {
    let mut ata = [0.0; 9];
    let mut atb = [0.0; 3];
    for (&e, &d) in eps.iter().zip(dj) {
        let row = [1.0, e, e * e];
        for i in 0..3 {
            atb[i] += row[i] * d;
            for j in 0..3 {
                ata[i * 3 + j] += row[i] * row[j];
            }
        }
    }
    linalg::solve(3, &ata, &atb).map(|c| QuadraticFit { a0: c[0], a1: c[1], a2: c[2] })
}

/// Evaluate `J(û + εη) − J(û)` over random directions and the ε grid at the
/// chosen level. Failed inner solves mark the direction and the test goes on.
pub fn perturbation_test(
    spec: &ModelSpec,
    lattice: &NoiseLattice,
    level: Level,
    atoms: &[usize],
    opts: &PerturbationOptions,
) -> Result<PerturbationReport> {
    if opts.directions == 0 || opts.eps_grid.len() < 3 {
        return Err(Error::Validation("need at least one direction and three grid points".into()));
    }
    let n = spec.dims.n;
    let dirs: Vec<NodeField> = (0..opts.directions).map(|d| random_direction(lattice, n, mix_seed(opts.seed, d as u64))).collect();

    type Eval<'a> = Box<dyn Fn(usize, &NodeField) -> Result<f64> + Sync + 'a>;
    let (base, eval, description): (Vec<NodeField>, Eval<'_>, String) = match level {
        Level::Minor => {
            let eq = solve_full_equilibrium(spec, lattice, atoms)?;
            let price = eq.price.clone();
            let agents = eq.alpha_hat.len();
            let eval: Eval<'_> = Box::new(move |d, alpha| cost_minor(spec, lattice, &price, alpha, d % agents, atoms[d % agents]));
            (eq.alpha_hat, eval, "agent d mod N, control α̂ⁱ + εη with the equilibrium price fixed".into())
        }
        Level::MajorN => {
            let eq = solve_full_equilibrium(spec, lattice, atoms)?;
            let eval: Eval<'_> = Box::new(move |_, b| cost_major(spec, lattice, b, atoms));
            (vec![eq.beta_hat], eval, "per-capita major flow b̂ + εη, market re-cleared".into())
        }
        Level::MajorMfg => {
            let mfg = solve_mfg(spec, lattice)?;
            let eval: Eval<'_> = Box::new(move |_, b| cost_mfg(spec, lattice, b));
            (vec![mfg.beta_hat], eval, "mean-field major flow β̂ + εη, atom population re-cleared".into())
        }
    };
    let pick = |d: usize| &base[d % base.len()];
    let baselines: Vec<f64> = (0..base.len()).map(|d| eval(d, pick(d))).collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..opts.directions).flat_map(|d| (0..opts.eps_grid.len()).map(move |e| (d, e))).collect();
    let values: Vec<Option<f64>> = tasks
        .par_iter()
        .map(|&(d, e)| {
            let eps = opts.eps_grid[e];
            let j0 = baselines[d % baselines.len()];
            if eps == 0.0 {
                return Some(0.0);
            }
            eval(d, &shifted(pick(d), &dirs[d], eps)).ok().map(|j| j - j0)
        })
        .collect();

    let k = opts.eps_grid.len();
    let mut delta_j = Vec::with_capacity(opts.directions);
    let mut failed = Vec::new();
    let mut fits = Vec::new();
    for d in 0..opts.directions {
        let row: Vec<f64> = values[d * k..(d + 1) * k].iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if row.iter().any(|v| !v.is_finite()) {
            failed.push(d);
        } else if let Some(fit) = fit_quadratic(&opts.eps_grid, &row) {
            fits.push(fit);
        }
        delta_j.push(row);
    }
    let ok = |d: &usize| !failed.contains(d);
    let min_delta_j = (0..opts.directions).filter(ok).flat_map(|d| delta_j[d].iter().copied()).fold(f64::INFINITY, f64::min);
    Ok(PerturbationReport {
        level,
        directions: opts.directions,
        description,
        eps_grid: opts.eps_grid.clone(),
        baseline: baselines[0],
        min_delta_j,
        gradient_norm: fits.iter().map(|f| f.a1.abs()).fold(0.0, f64::max),
        min_curvature: fits.iter().map(|f| f.a2).fold(f64::INFINITY, f64::min),
        fits,
        delta_j,
        failed,
    })
}
