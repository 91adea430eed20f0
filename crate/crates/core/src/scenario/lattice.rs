use std::io::Write;

use crate::error::{Error, Result};
use crate::model::Dimensions;

/// Default cap on the number of lattice nodes.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 20;

/// Uniform time grid `t_k = k·T/K`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Validation(format!("invalid time grid T={horizon}, K={steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }
}

/// Non-recombining tree of common-noise histories, stored level by level.
///
/// Every node has the same child pattern: `branching^d0` children, one per
/// combination of per-coordinate outcomes.
#[derive(Clone, Debug)]
pub struct NoiseLattice {
    grid: TimeGrid,
    d0: usize,
    branching: usize,
    children: usize,
    level_start: Vec<usize>,
    level: Vec<u32>,
    prob: Vec<f64>,
    slot_prob: Vec<f64>,
    slot_dw: Vec<f64>,
}

/// Per-coordinate outcomes and probabilities of one lattice step.
fn outcomes(branching: usize, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    match branching {
        2 => {
            let s = dt.sqrt();
            Ok((vec![-s, s], vec![0.5, 0.5]))
        }
        3 => {
            let s = (3.0 * dt).sqrt();
            Ok((vec![-s, 0.0, s], vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]))
        }
        b => Err(Error::Validation(format!("branching must be 2 or 3, got {b}"))),
    }
}

pub fn build_lattice(grid: TimeGrid, dims: &Dimensions, branching: usize) -> Result<NoiseLattice> {
    build_lattice_with_budget(grid, dims.d0, branching, DEFAULT_NODE_BUDGET)
}

pub fn build_lattice_with_budget(grid: TimeGrid, d0: usize, branching: usize, budget: usize) -> Result<NoiseLattice> {
    let (vals, probs) = outcomes(branching, grid.dt())?;
    let children = branching.checked_pow(d0 as u32).ok_or(Error::NodeBudget { required: usize::MAX, budget })?;
    let mut level_start = Vec::with_capacity(grid.steps + 2);
    let mut total: usize = 0;
    let mut width: usize = 1;
    for k in 0..=grid.steps {
        level_start.push(total);
        total = total.checked_add(width).ok_or(Error::NodeBudget { required: usize::MAX, budget })?;
        if total > budget {
            // Report the full requirement when it is representable.
            let mut req = total as u128;
            let mut w = width as u128;
            for _ in k + 1..=grid.steps {
                w *= children as u128;
                req += w;
            }
            return Err(Error::NodeBudget { required: req.min(usize::MAX as u128) as usize, budget });
        }
        if k < grid.steps {
            width = width.checked_mul(children).ok_or(Error::NodeBudget { required: usize::MAX, budget })?;
        }
    }
    level_start.push(total);

    let mut slot_prob = vec![1.0; children];
    let mut slot_dw = vec![0.0; children * d0];
    for s in 0..children {
        let mut rem = s;
        // Coordinate 0 varies slowest.
        for q in (0..d0).rev() {
            let o = rem % branching;
            rem /= branching;
            slot_dw[s * d0 + q] = vals[o];
        }
        let mut p = 1.0;
        let mut rem = s;
        let mut idx = vec![0usize; d0];
        for q in (0..d0).rev() {
            idx[q] = rem % branching;
            rem /= branching;
        }
        for q in 0..d0 {
            p *= probs[idx[q]];
        }
        slot_prob[s] = p;
    }

    let mut level = vec![0u32; total];
    let mut prob = vec![0.0; total];
    prob[0] = 1.0;
    for k in 1..=grid.steps {
        for v in level_start[k]..level_start[k + 1] {
            let j = v - level_start[k];
            let parent = level_start[k - 1] + j / children;
            level[v] = k as u32;
            prob[v] = prob[parent] * slot_prob[j % children];
        }
    }
    Ok(NoiseLattice { grid, d0, branching, children, level_start, level, prob, slot_prob, slot_dw })
}

impl NoiseLattice {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn children_per_node(&self) -> usize {
        self.children
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn level(&self, node: usize) -> usize {
        self.level[node] as usize
    }

    pub fn t(&self, node: usize) -> f64 {
        self.grid.t(self.level(node))
    }

    pub fn level_nodes(&self, k: usize) -> std::ops::Range<usize> {
        self.level_start[k]..self.level_start[k + 1]
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.level(node) == self.grid.steps
    }

    /// Nodes with `t < T`.
    pub fn non_terminal(&self) -> std::ops::Range<usize> {
        0..self.level_start[self.grid.steps]
    }

    pub fn terminal_nodes(&self) -> std::ops::Range<usize> {
        self.level_nodes(self.grid.steps)
    }

    pub fn probability(&self, node: usize) -> f64 {
        self.prob[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        let k = self.level(node);
        if k == 0 {
            return None;
        }
        let j = node - self.level_start[k];
        Some(self.level_start[k - 1] + j / self.children)
    }

    pub fn children(&self, node: usize) -> std::ops::Range<usize> {
        let k = self.level(node);
        if k == self.grid.steps {
            return 0..0;
        }
        let j = node - self.level_start[k];
        let first = self.level_start[k + 1] + j * self.children;
        first..first + self.children
    }

    /// Index of `node` among its siblings.
    pub fn slot(&self, node: usize) -> usize {
        let k = self.level(node);
        (node - self.level_start[k]) % self.children
    }

    /// Conditional probability of reaching `node` from its parent.
    pub fn conditional_probability(&self, node: usize) -> f64 {
        if self.level(node) == 0 {
            1.0
        } else {
            self.slot_prob[self.slot(node)]
        }
    }

    /// Common-noise increment ΔW⁰ leading into `node` (zeros at the root).
    pub fn increment(&self, node: usize) -> &[f64] {
        if self.level(node) == 0 {
            &self.slot_dw[0..0]
        } else {
            let s = self.slot(node);
            &self.slot_dw[s * self.d0..(s + 1) * self.d0]
        }
    }

    /// Probability-weighted sum over the nodes of one level.
    pub fn level_probability(&self, k: usize) -> f64 {
        self.level_nodes(k).map(|v| self.prob[v]).sum()
    }

    /// One CSV row per node: id, parent, level, ΔW⁰ coordinates, probability.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "node_id,parent_id,level")?;
        for q in 0..self.d0 {
            write!(w, ",dw_{q}")?;
        }
        writeln!(w, ",probability")?;
        for v in 0..self.len() {
            let parent = self.parent(v).map_or(String::new(), |p| p.to_string());
            write!(w, "{v},{parent},{}", self.level(v))?;
            let dw = self.increment(v);
            for q in 0..self.d0 {
                write!(w, ",{}", dw.get(q).copied().unwrap_or(0.0))?;
            }
            writeln!(w, ",{}", self.prob[v])?;
        }
        Ok(())
    }
}

/// An adapted process: `dim` values attached to every lattice node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField {
    dim: usize,
    data: Vec<f64>,
}

impl NodeField {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; nodes * dim] }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Validation(format!("field data of length {} is not a multiple of {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(lattice: &NoiseLattice, dim: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut field = Self::zeros(lattice.len(), dim);
        for v in 0..lattice.len() {
            f(v, field.get_mut(v));
        }
        field
    }

    pub fn constant(lattice: &NoiseLattice, value: &[f64]) -> Self {
        Self::from_fn(lattice, value.len(), |_, out| out.copy_from_slice(value))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn get(&self, node: usize) -> &[f64] {
        &self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn get_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs_diff(&self, other: &NodeField) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        crate::linalg::max_abs(&self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(k: usize, d0: usize, b: usize) -> NoiseLattice {
        build_lattice_with_budget(TimeGrid::new(1.0, k).unwrap(), d0, b, DEFAULT_NODE_BUDGET).unwrap()
    }

    #[test]
    fn binary_two_steps() {
        let l = lat(2, 1, 2);
        assert_eq!(l.len(), 7);
        for v in l.terminal_nodes() {
            assert_eq!(l.probability(v), 0.25);
        }
        assert_eq!(l.children(0), 1..3);
        assert_eq!(l.parent(5), Some(2));
    }

    #[test]
    fn one_step_increments() {
        let l = lat(1, 1, 2);
        let dw: Vec<f64> = l.children(0).map(|c| l.increment(c)[0]).collect();
        assert_eq!(dw, vec![-1.0, 1.0]);
    }

    #[test]
    fn two_factor_counts() {
        assert_eq!(lat(3, 2, 2).len(), 85);
        assert_eq!(lat(3, 2, 2).children_per_node(), 4);
    }

    #[test]
    fn trinomial_moments() {
        let l = lat(4, 1, 3);
        let dt = l.dt();
        let (m, v) = l.children(0).fold((0.0, 0.0), |(m, v), c| {
            let p = l.conditional_probability(c);
            let x = l.increment(c)[0];
            (m + p * x, v + p * x * x)
        });
        assert!(m.abs() < 1e-15 && (v - dt).abs() < 1e-15);
    }

    #[test]
    fn noiseless_chain() {
        let l = lat(5, 0, 2);
        assert_eq!(l.len(), 6);
        assert_eq!(l.children(2), 3..4);
    }

    #[test]
    fn budget_is_enforced() {
        let err = build_lattice_with_budget(TimeGrid::new(1.0, 30).unwrap(), 1, 2, DEFAULT_NODE_BUDGET).unwrap_err();
        match err {
            Error::NodeBudget { required, budget } => {
                assert_eq!(budget, DEFAULT_NODE_BUDGET);
                assert_eq!(required, (1usize << 31) - 1);
            }
            other => panic!("{other}"),
        }
    }
}
