//! Finite-population systems: minor best response to a given price, market
//! clearing for a given major flow, and the full major-optimal equilibrium.
//!
//! The major state and flow are stored per capita: `x⁰ = X⁰/N` and
//! `b = β/N`. Aggregates `𝔪(v) = Σᵢ wᵢ vᵢ` use agent weights, `1/N` for a
//! finite market.

mod systems;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbsde::{solve_direct, solve_picard, FbsdeSystem, NodeSolution, PicardOptions, SolveDiagnostics};
use crate::linalg;
use crate::model::{MinorBundle, ModelSpec};
use crate::scenario::{evaluate_exogenous, Exogenous, NodeField, NoiseLattice};

pub(crate) use systems::{BestResponseSystem, ClearingSystem, FullSystem};

/// How to solve the assembled system.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum SolverChoice {
    /// Direct solve when the system is affine, Picard otherwise.
    #[default]
    Auto,
    Direct,
    Picard(PicardOptions),
}

pub(crate) fn run<S: FbsdeSystem>(system: &S, lattice: &NoiseLattice, choice: SolverChoice) -> Result<NodeSolution> {
    match choice {
        SolverChoice::Direct => solve_direct(system, lattice),
        SolverChoice::Picard(o) => solve_picard(system, lattice, o),
        SolverChoice::Auto if system.is_affine() => solve_direct(system, lattice),
        SolverChoice::Auto => solve_picard(system, lattice, PicardOptions::default()),
    }
}

/// One minor agent: coefficient bundle, initial position, idiosyncratic
/// parameters and aggregation weight.
#[derive(Clone, Debug)]
pub(crate) struct Agent<'a> {
    pub bundle: &'a MinorBundle,
    pub xi: Vec<f64>,
    pub ci: Vec<f64>,
    pub weight: f64,
}

/// Evaluated exogenous data and agent list shared by the finite systems.
pub(crate) struct Market<'a> {
    pub spec: &'a ModelSpec,
    pub lattice: &'a NoiseLattice,
    pub exo: Exogenous,
    pub agents: Vec<Agent<'a>>,
    /// Population size used to report unnormalized quantities.
    pub scale: f64,
}

pub(crate) fn reject_idiosyncratic_brownian(spec: &ModelSpec) -> Result<()> {
    let any = (0..spec.dims.agents).any(|i| !spec.minor.bundle(i).sigma.is_zero());
    if any {
        return Err(Error::Unsupported(
            "idiosyncratic Brownian volatility sigma is not supported by the lattice solvers; \
             represent idiosyncratic randomness through finite atoms of (xi, c)"
                .into(),
        ));
    }
    Ok(())
}

impl<'a> Market<'a> {
    /// N agents with weights `1/N`; agent `i` uses its own bundle and atom `atoms[i]`.
    pub fn finite(spec: &'a ModelSpec, lattice: &'a NoiseLattice, atoms: &[usize]) -> Result<Self> {
        spec.validate()?;
        reject_idiosyncratic_brownian(spec)?;
        let n_agents = spec.dims.agents;
        if atoms.len() != n_agents {
            return Err(Error::Validation(format!("{} atom assignments for {n_agents} agents", atoms.len())));
        }
        let w = 1.0 / n_agents as f64;
        let agents = atoms
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let atom = spec.idio.atoms.get(a).ok_or_else(|| Error::Validation(format!("atom index {a} out of range")))?;
                Ok(Agent { bundle: spec.minor.bundle(i), xi: atom.xi.clone(), ci: atom.c.clone(), weight: w })
            })
            .collect::<Result<Vec<_>>>()?;
        let exo = evaluate_exogenous(lattice, spec)?;
        Ok(Self { spec, lattice, exo, agents, scale: n_agents as f64 })
    }

    /// One agent per atom of the idiosyncratic law, weighted by the atom
    /// weights (shared bundle). This is the mean-field population.
    pub fn atom_weighted(spec: &'a ModelSpec, lattice: &'a NoiseLattice) -> Result<Self> {
        spec.validate()?;
        reject_idiosyncratic_brownian(spec)?;
        if !spec.minor.is_homogeneous() {
            return Err(Error::Unsupported("the mean-field population needs a homogeneous minor bundle".into()));
        }
        let bundle = spec.minor.bundle(0);
        let agents = spec
            .idio
            .atoms
            .iter()
            .map(|a| Agent { bundle, xi: a.xi.clone(), ci: a.c.clone(), weight: a.weight })
            .collect();
        let exo = evaluate_exogenous(lattice, spec)?;
        Ok(Self { spec, lattice, exo, agents, scale: 1.0 })
    }

    pub fn n(&self) -> usize {
        self.spec.dims.n
    }

    pub fn t(&self, node: usize) -> f64 {
        self.lattice.t(node)
    }

    pub fn c0(&self, node: usize) -> &[f64] {
        self.exo.c0.get(node)
    }

    pub fn kappa(&self) -> f64 {
        self.spec.delta / (1.0 - self.spec.delta)
    }

    /// Weighted mean of per-agent blocks laid out contiguously.
    pub fn mean(&self, blocks: &[f64], out: &mut [f64]) {
        let n = self.n();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, a) in self.agents.iter().enumerate() {
            for j in 0..n {
                out[j] += a.weight * blocks[i * n + j];
            }
        }
    }

    /// Major control `b = V̄⁰(−p⁰ + 𝔪(y) + 𝔪(p))` at a node.
    pub fn beta_rule(&self, node: usize, p0: &[f64], my: &[f64], mp: &[f64], out: &mut [f64]) {
        let v: Vec<f64> = (0..self.n()).map(|j| -p0[j] + my[j] + mp[j]).collect();
        linalg::matvec(self.exo.vbar0.get(node), &v, out);
    }

    /// Price `φ = −𝔪(y) + Λ b`.
    pub fn price_rule(&self, node: usize, my: &[f64], b: &[f64], out: &mut [f64]) {
        linalg::matvec(self.exo.lambda.get(node), b, out);
        for (o, m) in out.iter_mut().zip(my) {
            *o -= m;
        }
    }

    /// `α̂ = −Λ̄(y + φ)`.
    pub fn alpha_rule(&self, node: usize, y: &[f64], phi: &[f64], out: &mut [f64]) {
        let s: Vec<f64> = y.iter().zip(phi).map(|(a, b)| a + b).collect();
        linalg::matvec(self.exo.lambda_inv.get(node), &s, out);
        out.iter_mut().for_each(|o| *o = -*o);
    }
}

/// Solved finite market: states, controls and the clearing price.
#[derive(Clone, Debug)]
pub struct EquilibriumSolution {
    pub n: usize,
    pub agents: usize,
    /// Aggregation weights of the agents.
    pub weights: Vec<f64>,
    /// Population size; unnormalized flow is `scale · beta_hat`.
    pub scale: f64,
    /// Normalized major state x⁰ (absent for clearing-only solves).
    pub x0: Option<NodeField>,
    pub p0: Option<NodeField>,
    pub x: Vec<NodeField>,
    pub y: Vec<NodeField>,
    /// Adjoint blocks Rⁱ, Pⁱ (empty for clearing-only solves).
    pub r: Vec<NodeField>,
    pub p: Vec<NodeField>,
    /// Per-capita major flow `β̂/N`.
    pub beta_hat: NodeField,
    pub alpha_hat: Vec<NodeField>,
    pub price: NodeField,
    /// Λ̄ per node, kept to recompute controls.
    pub lambda_inv: NodeField,
    pub clearing_residual: f64,
    pub solution: NodeSolution,
}

impl EquilibriumSolution {
    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.solution.diagnostics
    }

    /// Unnormalized major flow β̂ = N·b.
    pub fn beta_unnormalized(&self) -> NodeField {
        let mut f = self.beta_hat.clone();
        f.as_mut_slice().iter_mut().for_each(|v| *v *= self.scale);
        f
    }

    /// Unnormalized major position X⁰ = N·x⁰.
    pub fn x0_unnormalized(&self) -> Option<NodeField> {
        self.x0.as_ref().map(|x| {
            let mut f = x.clone();
            f.as_mut_slice().iter_mut().for_each(|v| *v *= self.scale);
            f
        })
    }

    /// Mean of the per-agent y blocks at every node.
    pub fn mean_y(&self) -> NodeField {
        let mut out = NodeField::zeros(self.price.nodes(), self.n);
        for (w, y) in self.weights.iter().zip(&self.y) {
            for (o, v) in out.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *o += w * v;
            }
        }
        out
    }
}

fn split(field: &NodeField, offset: usize, n: usize) -> NodeField {
    let nodes = field.nodes();
    let mut out = NodeField::zeros(nodes, n);
    for v in 0..nodes {
        out.get_mut(v).copy_from_slice(&field.get(v)[offset..offset + n]);
    }
    out
}

/// Max over non-terminal nodes of `scale·|Σᵢ wᵢ α̂ⁱ + b|`, with α̂ⁱ recomputed
/// from the solution's adjoints and price. For a finite market this is
/// `|Σᵢ α̂ⁱ + β̂|`.
pub fn clearing_residual(solution: &EquilibriumSolution, lattice: &NoiseLattice) -> f64 {
    let n = solution.n;
    lattice
        .non_terminal()
        .into_par_iter()
        .map(|v| {
            let mut total = solution.beta_hat.get(v).to_vec();
            let mut a = vec![0.0; n];
            for (w, y) in solution.weights.iter().zip(&solution.y) {
                let s: Vec<f64> = y.get(v).iter().zip(solution.price.get(v)).map(|(p, q)| p + q).collect();
                linalg::matvec(solution.lambda_inv.get(v), &s, &mut a);
                for j in 0..n {
                    total[j] -= w * a[j];
                }
            }
            solution.scale * linalg::max_abs(&total)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

fn assemble(market: &Market<'_>, sol: NodeSolution, with_major: bool, flow: Option<&NodeField>) -> EquilibriumSolution {
    let n = market.n();
    let na = market.agents.len();
    let lattice = market.lattice;
    let nodes = lattice.len();
    let (x0, p0, xoff, roff) = if with_major {
        (Some(split(&sol.forward, 0, n)), Some(split(&sol.backward, 0, n)), n, n + na * n)
    } else {
        (None, None, 0, 0)
    };
    let x: Vec<NodeField> = (0..na).map(|i| split(&sol.forward, xoff + i * n, n)).collect();
    let y: Vec<NodeField> = (0..na).map(|i| split(&sol.backward, xoff + i * n, n)).collect();
    let (r, p) = if with_major {
        (
            (0..na).map(|i| split(&sol.forward, roff + i * n, n)).collect(),
            (0..na).map(|i| split(&sol.backward, roff + i * n, n)).collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    let mut beta = NodeField::zeros(nodes, n);
    let mut price = NodeField::zeros(nodes, n);
    let mut my = vec![0.0; n];
    let mut mp = vec![0.0; n];
    for v in 0..nodes {
        let ys: Vec<f64> = y.iter().flat_map(|f| f.get(v).iter().copied()).collect();
        market.mean(&ys, &mut my);
        let terminal = lattice.is_terminal(v);
        let mut b = vec![0.0; n];
        match flow {
            Some(f) => b.copy_from_slice(f.get(v)),
            None => {
                if !terminal || market.spec.maturity {
                    let ps: Vec<f64> = p.iter().flat_map(|f: &NodeField| f.get(v).iter().copied()).collect();
                    market.mean(&ps, &mut mp);
                    market.beta_rule(v, p0.as_ref().expect("major block").get(v), &my, &mp, &mut b);
                }
            }
        }
        if terminal && !market.spec.maturity {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        beta.get_mut(v).copy_from_slice(&b);
        market.price_rule(v, &my, &b, price.get_mut(v));
    }
    let alpha_hat: Vec<NodeField> = (0..na)
        .map(|i| NodeField::from_fn(lattice, n, |v, out| market.alpha_rule(v, y[i].get(v), price.get(v), out)))
        .collect();
    let mut eq = EquilibriumSolution {
        n,
        agents: na,
        weights: market.agents.iter().map(|a| a.weight).collect(),
        scale: market.scale,
        x0,
        p0,
        x,
        y,
        r,
        p,
        beta_hat: beta,
        alpha_hat,
        price,
        lambda_inv: market.exo.lambda_inv.clone(),
        clearing_residual: 0.0,
        solution: sol,
    };
    eq.clearing_residual = clearing_residual(&eq, lattice);
    eq
}

/// Solve the full major-optimal equilibrium for agents assigned to atoms.
pub fn solve_full_equilibrium(spec: &ModelSpec, lattice: &NoiseLattice, atoms: &[usize]) -> Result<EquilibriumSolution> {
    solve_full_equilibrium_with(spec, lattice, atoms, SolverChoice::Auto)
}

pub fn solve_full_equilibrium_with(
    spec: &ModelSpec,
    lattice: &NoiseLattice,
    atoms: &[usize],
    choice: SolverChoice,
) -> Result<EquilibriumSolution> {
    let market = Market::finite(spec, lattice, atoms)?;
    solve_market(&market, choice)
}

pub(crate) fn solve_market(market: &Market<'_>, choice: SolverChoice) -> Result<EquilibriumSolution> {
    let system = FullSystem::new(market);
    let sol = run(&system, market.lattice, choice)?;
    Ok(assemble(market, sol, true, None))
}

/// Solve the N-agent clearing system for a given per-capita major flow
/// `b = β/N` (zero on terminal nodes unless in maturity mode).
pub fn solve_minor_clearing(
    spec: &ModelSpec,
    lattice: &NoiseLattice,
    flow: &NodeField,
    atoms: &[usize],
) -> Result<EquilibriumSolution> {
    let market = Market::finite(spec, lattice, atoms)?;
    clear_market(&market, flow, SolverChoice::Auto)
}

pub(crate) fn clear_market(market: &Market<'_>, flow: &NodeField, choice: SolverChoice) -> Result<EquilibriumSolution> {
    let n = market.n();
    if flow.dim() != n || flow.nodes() != market.lattice.len() {
        return Err(Error::Validation("flow field does not match the lattice".into()));
    }
    if !market.spec.maturity {
        for v in market.lattice.terminal_nodes() {
            if flow.get(v).iter().any(|b| *b != 0.0) {
                return Err(Error::Validation(format!("major flow must vanish at terminal node {v}")));
            }
        }
    }
    let system = ClearingSystem::new(market, flow);
    let sol = run(&system, market.lattice, choice)?;
    Ok(assemble(market, sol, false, Some(flow)))
}

/// A price taker's optimal response to an exogenous price path.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub x: NodeField,
    pub y: NodeField,
    pub alpha: NodeField,
    pub solution: NodeSolution,
}

/// Best responses of every agent (atoms assigned by `atoms`) to `price`.
/// The terminal price value enters the terminal adjoint condition.
pub fn minor_best_response(
    spec: &ModelSpec,
    lattice: &NoiseLattice,
    price: &NodeField,
    atoms: &[usize],
) -> Result<Vec<BestResponse>> {
    let market = Market::finite(spec, lattice, atoms)?;
    best_responses(&market, price)
}

pub(crate) fn best_responses(market: &Market<'_>, price: &NodeField) -> Result<Vec<BestResponse>> {
    let n = market.n();
    if price.dim() != n || price.nodes() != market.lattice.len() {
        return Err(Error::Validation("price field does not match the lattice".into()));
    }
    (0..market.agents.len())
        .into_par_iter()
        .map(|i| {
            let system = BestResponseSystem::new(market, &market.agents[i], price);
            let sol = run(&system, market.lattice, SolverChoice::Auto)?;
            let x = sol.forward.clone();
            let y = sol.backward.clone();
            let alpha = NodeField::from_fn(market.lattice, n, |v, out| market.alpha_rule(v, y.get(v), price.get(v), out));
            Ok(BestResponse { x, y, alpha, solution: sol })
        })
        .collect()
}

/// Summary numbers of an equilibrium for reports.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumSummary {
    pub clearing_residual: f64,
    pub diagnostics: SolveDiagnostics,
    pub price_t0: Vec<f64>,
    pub beta_hat_t0: Vec<f64>,
}

impl From<&EquilibriumSolution> for EquilibriumSummary {
    fn from(s: &EquilibriumSolution) -> Self {
        Self {
            clearing_residual: s.clearing_residual,
            diagnostics: s.solution.diagnostics.clone(),
            price_t0: s.price.get(0).to_vec(),
            beta_hat_t0: s.beta_unnormalized().get(0).to_vec(),
        }
    }
}

#[cfg(test)]
mod tests;
