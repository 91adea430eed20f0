use crate::error::{Error, Result};
use crate::finite_market::{clear_market, reject_idiosyncratic_brownian, Market, SolverChoice};
use crate::linalg;
use crate::model::ModelSpec;
use crate::scenario::{evaluate_exogenous, Exogenous, NodeField, NoiseLattice};

/// `x_c = x_v + Δt·drift(v) + vol(v)·ΔW_c` from `start`; `vol` is `n × d0`.
fn euler_path(
    lattice: &NoiseLattice,
    start: &[f64],
    drift: impl Fn(usize) -> Vec<f64>,
    vol: impl Fn(usize) -> Vec<f64>,
) -> NodeField {
    let n = start.len();
    let dt = lattice.dt();
    let mut x = NodeField::zeros(lattice.len(), n);
    x.get_mut(0).copy_from_slice(start);
    for v in lattice.non_terminal() {
        let d = drift(v);
        let s = if lattice.d0() > 0 { vol(v) } else { Vec::new() };
        let xv = x.get(v).to_vec();
        for c in lattice.children(v) {
            let mut next: Vec<f64> = (0..n).map(|j| xv[j] + dt * d[j]).collect();
            if !s.is_empty() {
                linalg::matvec_add(&s, lattice.increment(c), &mut next);
            }
            x.get_mut(c).copy_from_slice(&next);
        }
    }
    x
}

fn quad(c: &[f64], h: &[f64], x: &[f64]) -> f64 {
    let mut cx = vec![0.0; x.len()];
    linalg::matvec(c, x, &mut cx);
    0.5 * linalg::dot(x, &cx) + linalg::dot(h, x)
}

fn check_field(name: &str, f: &NodeField, lattice: &NoiseLattice, n: usize) -> Result<()> {
    if f.nodes() != lattice.len() || f.dim() != n {
        return Err(Error::Shape { name: name.into(), expected: (lattice.len(), n), found: (f.nodes(), f.dim()) });
    }
    Ok(())
}

/// Cost of agent `agent` (initial data from atom `atom`) trading `alpha`
/// against the fixed price path `price`:
/// `E[Σ_k Δt(⟨φ,α⟩ + ½⟨α,Λα⟩)_k + Σ_{k≥1} Δt f̄(X_k) + g(X_T)]` with
/// `g = −δ⟨φ_T, x⟩ + ḡ`, or `−⟨c⁰_T, x⟩` in maturity mode.
pub fn cost_minor(
    spec: &ModelSpec,
    lattice: &NoiseLattice,
    price: &NodeField,
    alpha: &NodeField,
    agent: usize,
    atom: usize,
) -> Result<f64> {
    let n = spec.dims.n;
    check_field("price", price, lattice, n)?;
    check_field("alpha", alpha, lattice, n)?;
    reject_idiosyncratic_brownian(spec)?;
    if agent >= spec.dims.agents {
        return Err(Error::Validation(format!("agent {agent} out of range")));
    }
    let a = spec.idio.atoms.get(atom).ok_or_else(|| Error::Validation(format!("atom index {atom} out of range")))?;
    let exo = evaluate_exogenous(lattice, spec)?;
    let b = spec.minor.bundle(agent);
    let ci = &a.c;
    let at = |v: usize| (lattice.t(v), exo.c0.get(v));
    let x = euler_path(
        lattice,
        &a.xi,
        |v| {
            let (t, c0) = at(v);
            let l = b.l.eval(t, c0, ci);
            alpha.get(v).iter().zip(&l).map(|(p, q)| p + q).collect()
        },
        |v| {
            let (t, c0) = at(v);
            b.sigma0.eval(t, c0, ci)
        },
    );
    let dt = lattice.dt();
    let mut j = 0.0;
    for v in 0..lattice.len() {
        let (t, c0) = at(v);
        let p = lattice.probability(v);
        let xv = x.get(v);
        if v > 0 {
            j += p * dt * quad(&b.cf.eval(t, c0, ci), &b.hf.eval(t, c0, ci), xv);
        }
        if lattice.is_terminal(v) {
            j += p * if spec.maturity {
                -linalg::dot(c0, xv)
            } else {
                quad(&b.cg.eval(t, c0, ci), &b.hg.eval(t, c0, ci), xv) - spec.delta * linalg::dot(price.get(v), xv)
            };
        } else {
            let av = alpha.get(v);
            let mut la = vec![0.0; n];
            linalg::matvec(exo.lambda.get(v), av, &mut la);
            j += p * dt * (linalg::dot(price.get(v), av) + 0.5 * linalg::dot(av, &la));
        }
    }
    Ok(j)
}

/// Normalized major cost of the per-capita flow `flow` when the market
/// answers with `price`:
/// `E[Σ_k Δt(⟨b,φ⟩ + ½⟨b,Λ⁰b⟩)_k + Σ_{k≥1} Δt 𝔣̄₀(x⁰_k) + 𝔤₀(x⁰_T)]`.
pub fn major_cost_along(spec: &ModelSpec, lattice: &NoiseLattice, flow: &NodeField, price: &NodeField) -> Result<f64> {
    let exo = evaluate_exogenous(lattice, spec)?;
    major_cost_with(spec, lattice, &exo, flow, price)
}

fn major_cost_with(spec: &ModelSpec, lattice: &NoiseLattice, exo: &Exogenous, flow: &NodeField, price: &NodeField) -> Result<f64> {
    let n = spec.dims.n;
    check_field("flow", flow, lattice, n)?;
    check_field("price", price, lattice, n)?;
    let at = |v: usize| (lattice.t(v), exo.c0.get(v));
    let x0 = euler_path(
        lattice,
        &spec.chi0,
        |v| {
            let (t, c0) = at(v);
            let l0 = spec.major.l0.eval(t, c0, &[]);
            flow.get(v).iter().zip(&l0).map(|(p, q)| p + q).collect()
        },
        |v| {
            let (t, c0) = at(v);
            spec.major.s0.eval(t, c0, &[])
        },
    );
    let dt = lattice.dt();
    let mut j = 0.0;
    for v in 0..lattice.len() {
        let (t, c0) = at(v);
        let p = lattice.probability(v);
        let xv = x0.get(v);
        if v > 0 {
            j += p * dt * spec.major.running.value(t, xv, c0);
        }
        if lattice.is_terminal(v) {
            j += p * if spec.maturity { -linalg::dot(c0, xv) } else { spec.major.terminal.value(t, xv, c0) };
        } else {
            let bv = flow.get(v);
            let mut lb = vec![0.0; n];
            linalg::matvec(exo.lambda0.get(v), bv, &mut lb);
            j += p * dt * (linalg::dot(price.get(v), bv) + 0.5 * linalg::dot(bv, &lb));
        }
    }
    Ok(j)
}

/// Normalized finite-N major cost: the minor clearing system is re-solved
/// for `flow` (per capita) and the induced price enters the functional.
pub fn cost_major(spec: &ModelSpec, lattice: &NoiseLattice, flow: &NodeField, atoms: &[usize]) -> Result<f64> {
    let market = Market::finite(spec, lattice, atoms)?;
    let sol = clear_market(&market, flow, SolverChoice::Auto)?;
    major_cost_with(spec, lattice, &market.exo, flow, &sol.price)
}

/// Mean-field major cost: clearing against the atom-weighted population.
pub fn cost_mfg(spec: &ModelSpec, lattice: &NoiseLattice, flow: &NodeField) -> Result<f64> {
    let market = Market::atom_weighted(spec, lattice)?;
    let sol = clear_market(&market, flow, SolverChoice::Auto)?;
    major_cost_with(spec, lattice, &market.exo, flow, &sol.price)
}
