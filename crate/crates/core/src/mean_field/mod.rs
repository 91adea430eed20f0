//! Mean-field limit: the conditional means close into an affine system on
//! the common lattice; per-atom deviations then solve decoupled linear
//! systems.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbsde::{solve_direct, FbsdeSystem, NodeSolution, SolveDiagnostics};
use crate::finite_market::{reject_idiosyncratic_brownian, run, SolverChoice};
use crate::linalg;
use crate::model::{MinorBundle, ModelSpec};
use crate::scenario::{evaluate_exogenous, Exogenous, NodeField, NoiseLattice};

/// Solution of the mean-field system.
#[derive(Clone, Debug)]
pub struct MfgSolution {
    pub n: usize,
    pub x0: NodeField,
    pub p0: NodeField,
    /// Conditional means of the representative minor agent.
    pub xbar: NodeField,
    pub ybar: NodeField,
    pub pbar: NodeField,
    pub rbar: NodeField,
    /// Per-atom deviations from the conditional means.
    pub dx: Vec<NodeField>,
    pub dy: Vec<NodeField>,
    pub dp: Vec<NodeField>,
    pub dr: Vec<NodeField>,
    pub weights: Vec<f64>,
    pub beta_hat: NodeField,
    pub price: NodeField,
    pub reduced: NodeSolution,
}

fn add(a: &NodeField, b: &NodeField) -> NodeField {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x + y).collect();
    NodeField::from_vec(a.dim(), data).expect("same shape")
}

impl MfgSolution {
    pub fn atoms(&self) -> usize {
        self.dx.len()
    }

    pub fn atom_x(&self, a: usize) -> NodeField {
        add(&self.xbar, &self.dx[a])
    }

    pub fn atom_y(&self, a: usize) -> NodeField {
        add(&self.ybar, &self.dy[a])
    }

    pub fn atom_p(&self, a: usize) -> NodeField {
        add(&self.pbar, &self.dp[a])
    }

    pub fn atom_r(&self, a: usize) -> NodeField {
        add(&self.rbar, &self.dr[a])
    }

    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.reduced.diagnostics
    }

    /// Largest weighted mean of any deviation field.
    pub fn deviation_mean_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for fields in [&self.dx, &self.dy, &self.dp, &self.dr] {
            let len = fields[0].as_slice().len();
            for k in 0..len {
                let s: f64 = fields.iter().zip(&self.weights).map(|(f, w)| w * f.as_slice()[k]).sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }
}

fn weighted_eval(
    spec: &ModelSpec,
    pick: impl Fn(&MinorBundle) -> &crate::model::Coefficient,
    t: f64,
    c0: &[f64],
    len: usize,
) -> Vec<f64> {
    let b = spec.minor.bundle(0);
    let mut out = vec![0.0; len];
    for atom in &spec.idio.atoms {
        let v = pick(b).eval(t, c0, &atom.c);
        for (o, x) in out.iter_mut().zip(&v) {
            *o += atom.weight * x;
        }
    }
    out
}

/// The 6-block conditional-mean system: forward `[x⁰, x̄, r̄]`, backward
/// `[p⁰, ȳ, p̄]`.
pub struct MeanSystem<'a> {
    spec: &'a ModelSpec,
    lattice: &'a NoiseLattice,
    exo: Exogenous,
}

/// Apply conditional expectations to the mean-field system. Requires a
/// homogeneous bundle whose curvatures `c^f`, `c^g` do not depend on cⁱ.
pub fn reduce_conditional_means<'a>(spec: &'a ModelSpec, lattice: &'a NoiseLattice) -> Result<MeanSystem<'a>> {
    spec.validate()?;
    reject_idiosyncratic_brownian(spec)?;
    if !spec.minor.is_homogeneous() {
        return Err(Error::Unsupported("the mean-field system needs a homogeneous minor bundle".into()));
    }
    let b = spec.minor.bundle(0);
    if b.cf.depends_on_idio() || b.cg.depends_on_idio() {
        return Err(Error::Unsupported(
            "conditional means do not close when c^f or c^g depend on the idiosyncratic parameter; \
             use a finite weighted-agent market instead"
                .into(),
        ));
    }
    let exo = evaluate_exogenous(lattice, spec)?;
    Ok(MeanSystem { spec, lattice, exo })
}

impl MeanSystem<'_> {
    fn t(&self, node: usize) -> f64 {
        self.lattice.t(node)
    }

    fn c0(&self, node: usize) -> &[f64] {
        self.exo.c0.get(node)
    }

    fn control(&self, node: usize, bwd: &[f64], out: &mut [f64]) {
        let n = self.spec.dims.n;
        let v: Vec<f64> = (0..n).map(|j| -bwd[j] + bwd[n + j] + bwd[2 * n + j]).collect();
        linalg::matvec(self.exo.vbar0.get(node), &v, out);
    }
}

impl FbsdeSystem for MeanSystem<'_> {
    fn forward_dim(&self) -> usize {
        3 * self.spec.dims.n
    }

    fn backward_dim(&self) -> usize {
        3 * self.spec.dims.n
    }

    fn is_affine(&self) -> bool {
        self.spec.major.is_affine()
    }

    fn initial(&self, out: &mut [f64]) {
        let n = self.spec.dims.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        out[..n].copy_from_slice(&self.spec.chi0);
        out[n..2 * n].copy_from_slice(&self.spec.idio.mean_xi());
    }

    fn drift(&self, node: usize, _fwd: &[f64], bwd: &[f64], out: &mut [f64]) {
        let n = self.spec.dims.n;
        let mut b = vec![0.0; n];
        self.control(node, bwd, &mut b);
        let (t, c0) = (self.t(node), self.c0(node));
        let l0 = self.spec.major.l0.eval(t, c0, &[]);
        let lbar = weighted_eval(self.spec, |b| &b.l, t, c0, n);
        for j in 0..n {
            out[j] = b[j] + l0[j];
            out[n + j] = -b[j] + lbar[j];
            out[2 * n + j] = b[j];
        }
    }

    fn noise(&self, node: usize, dw: &[f64], out: &mut [f64]) {
        let n = self.spec.dims.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        if dw.is_empty() {
            return;
        }
        let (t, c0) = (self.t(node), self.c0(node));
        let s0 = self.spec.major.s0.eval(t, c0, &[]);
        linalg::matvec(&s0, dw, &mut out[..n]);
        let sbar = weighted_eval(self.spec, |b| &b.sigma0, t, c0, n * dw.len());
        linalg::matvec(&sbar, dw, &mut out[n..2 * n]);
    }

    fn driver(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let n = self.spec.dims.n;
        let (t, c0) = (self.t(node), self.c0(node));
        self.spec.major.running.gradient(t, &fwd[..n], c0, &mut out[..n]);
        let b = self.spec.minor.bundle(0);
        let cf = b.cf.eval(t, c0, &[]);
        let hf = weighted_eval(self.spec, |b| &b.hf, t, c0, n);
        out[n..2 * n].copy_from_slice(&hf);
        linalg::matvec_add(&cf, &fwd[n..2 * n], &mut out[n..2 * n]);
        let mut tmp = vec![0.0; n];
        linalg::matvec(&cf, &fwd[2 * n..], &mut tmp);
        for j in 0..n {
            out[2 * n + j] = -tmp[j];
        }
    }

    fn terminal(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let n = self.spec.dims.n;
        let (t, c0) = (self.t(node), self.c0(node));
        if self.spec.maturity {
            out.iter_mut().for_each(|o| *o = 0.0);
            for j in 0..n {
                out[j] = -c0[j];
                out[n + j] = -c0[j];
            }
            return;
        }
        self.spec.major.terminal.gradient(t, &fwd[..n], c0, &mut out[..n]);
        let b = self.spec.minor.bundle(0);
        let cg = b.cg.eval(t, c0, &[]);
        let hg = weighted_eval(self.spec, |b| &b.hg, t, c0, n);
        let amp = 1.0 / (1.0 - self.spec.delta);
        let mut g = hg.clone();
        linalg::matvec_add(&cg, &fwd[n..2 * n], &mut g);
        let mut tmp = vec![0.0; n];
        linalg::matvec(&cg, &fwd[2 * n..], &mut tmp);
        for j in 0..n {
            out[n + j] = amp * g[j];
            out[2 * n + j] = -amp * tmp[j];
        }
    }
}

/// Deviation of one atom from the conditional means: forward `[δx, δr]`,
/// backward `[δy, δp]`.
struct DeviationSystem<'s, 'a> {
    mean: &'s MeanSystem<'a>,
    atom: usize,
}

impl DeviationSystem<'_, '_> {
    fn gap(&self, pick: impl Fn(&MinorBundle) -> &crate::model::Coefficient, node: usize, len: usize) -> Vec<f64> {
        let m = self.mean;
        let (t, c0) = (m.t(node), m.c0(node));
        let own = pick(m.spec.minor.bundle(0)).eval(t, c0, &m.spec.idio.atoms[self.atom].c);
        let avg = weighted_eval(m.spec, pick, t, c0, len);
        own.iter().zip(&avg).map(|(a, b)| a - b).collect()
    }
}

impl FbsdeSystem for DeviationSystem<'_, '_> {
    fn forward_dim(&self) -> usize {
        2 * self.mean.spec.dims.n
    }

    fn backward_dim(&self) -> usize {
        2 * self.mean.spec.dims.n
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn initial(&self, out: &mut [f64]) {
        let n = self.mean.spec.dims.n;
        let mean = self.mean.spec.idio.mean_xi();
        let xi = &self.mean.spec.idio.atoms[self.atom].xi;
        for j in 0..n {
            out[j] = xi[j] - mean[j];
            out[n + j] = 0.0;
        }
    }

    fn drift(&self, node: usize, _fwd: &[f64], bwd: &[f64], out: &mut [f64]) {
        let n = self.mean.spec.dims.n;
        let linv = self.mean.exo.lambda_inv.get(node);
        let dl = self.gap(|b| &b.l, node, n);
        let mut tmp = vec![0.0; n];
        linalg::matvec(linv, &bwd[..n], &mut tmp);
        for j in 0..n {
            out[j] = -tmp[j] + dl[j];
        }
        linalg::matvec(linv, &bwd[n..], &mut out[n..]);
    }

    fn noise(&self, node: usize, dw: &[f64], out: &mut [f64]) {
        let n = self.mean.spec.dims.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        if dw.is_empty() {
            return;
        }
        let ds = self.gap(|b| &b.sigma0, node, n * dw.len());
        linalg::matvec(&ds, dw, &mut out[..n]);
    }

    fn driver(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let n = self.mean.spec.dims.n;
        let m = self.mean;
        let cf = m.spec.minor.bundle(0).cf.eval(m.t(node), m.c0(node), &[]);
        let dh = self.gap(|b| &b.hf, node, n);
        out[..n].copy_from_slice(&dh);
        linalg::matvec_add(&cf, &fwd[..n], &mut out[..n]);
        let mut tmp = vec![0.0; n];
        linalg::matvec(&cf, &fwd[n..], &mut tmp);
        for j in 0..n {
            out[n + j] = -tmp[j];
        }
    }

    fn terminal(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let n = self.mean.spec.dims.n;
        if self.mean.spec.maturity {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let m = self.mean;
        let cg = m.spec.minor.bundle(0).cg.eval(m.t(node), m.c0(node), &[]);
        let dh = self.gap(|b| &b.hg, node, n);
        out[..n].copy_from_slice(&dh);
        linalg::matvec_add(&cg, &fwd[..n], &mut out[..n]);
        let mut tmp = vec![0.0; n];
        linalg::matvec(&cg, &fwd[n..], &mut tmp);
        for j in 0..n {
            out[n + j] = -tmp[j];
        }
    }
}

fn split(field: &NodeField, offset: usize, n: usize) -> NodeField {
    let mut out = NodeField::zeros(field.nodes(), n);
    for v in 0..field.nodes() {
        out.get_mut(v).copy_from_slice(&field.get(v)[offset..offset + n]);
    }
    out
}

pub fn solve_mfg(spec: &ModelSpec, lattice: &NoiseLattice) -> Result<MfgSolution> {
    solve_mfg_with(spec, lattice, SolverChoice::Auto)
}

pub fn solve_mfg_with(spec: &ModelSpec, lattice: &NoiseLattice, choice: SolverChoice) -> Result<MfgSolution> {
    let mean = reduce_conditional_means(spec, lattice)?;
    let n = spec.dims.n;
    let reduced = run(&mean, lattice, choice)?;
    let deviations: Vec<NodeSolution> = (0..spec.idio.atoms.len())
        .into_par_iter()
        .map(|a| solve_direct(&DeviationSystem { mean: &mean, atom: a }, lattice))
        .collect::<Result<_>>()?;
    let nodes = lattice.len();
    let mut beta = NodeField::zeros(nodes, n);
    let mut price = NodeField::zeros(nodes, n);
    for v in 0..nodes {
        let bwd = reduced.backward.get(v);
        let mut b = vec![0.0; n];
        if !lattice.is_terminal(v) || spec.maturity {
            mean.control(v, bwd, &mut b);
        }
        linalg::matvec(mean.exo.lambda.get(v), &b, price.get_mut(v));
        for j in 0..n {
            price.get_mut(v)[j] -= bwd[n + j];
        }
        beta.get_mut(v).copy_from_slice(&b);
    }
    Ok(MfgSolution {
        n,
        x0: split(&reduced.forward, 0, n),
        p0: split(&reduced.backward, 0, n),
        xbar: split(&reduced.forward, n, n),
        ybar: split(&reduced.backward, n, n),
        pbar: split(&reduced.backward, 2 * n, n),
        rbar: split(&reduced.forward, 2 * n, n),
        dx: deviations.iter().map(|d| split(&d.forward, 0, n)).collect(),
        dr: deviations.iter().map(|d| split(&d.forward, n, n)).collect(),
        dy: deviations.iter().map(|d| split(&d.backward, 0, n)).collect(),
        dp: deviations.iter().map(|d| split(&d.backward, n, n)).collect(),
        weights: spec.idio.atoms.iter().map(|a| a.weight).collect(),
        beta_hat: beta,
        price,
        reduced,
    })
}

/// Switch a model to the maturity variant: linear terminal costs paying c⁰_T.
pub fn mfg_maturity_override(spec: &ModelSpec) -> ModelSpec {
    let mut out = spec.clone();
    out.maturity = true;
    out
}

#[cfg(test)]
mod tests;
