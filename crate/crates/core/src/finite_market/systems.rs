use super::{Agent, Market};
use crate::fbsde::FbsdeSystem;
use crate::linalg;
use crate::scenario::NodeField;

/// Per-node evaluation of an agent's coefficients.
struct Coefs {
    cf: Vec<f64>,
    hf: Vec<f64>,
    cg: Vec<f64>,
    hg: Vec<f64>,
}

fn coefs(m: &Market<'_>, a: &Agent<'_>, node: usize) -> Coefs {
    let t = m.t(node);
    let c0 = m.c0(node);
    let b = a.bundle;
    Coefs {
        cf: b.cf.eval(t, c0, &a.ci),
        hf: b.hf.eval(t, c0, &a.ci),
        cg: b.cg.eval(t, c0, &a.ci),
        hg: b.hg.eval(t, c0, &a.ci),
    }
}

fn agent_noise(m: &Market<'_>, a: &Agent<'_>, node: usize, dw: &[f64], out: &mut [f64]) {
    if dw.is_empty() {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let s = a.bundle.sigma0.eval(m.t(node), m.c0(node), &a.ci);
    linalg::matvec(&s, dw, out);
}

/// `c x + h` into `out`.
fn affine(c: &[f64], h: &[f64], x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(h);
    linalg::matvec_add(c, x, out);
}

/// Full equilibrium: forward `[x⁰, X¹..X^N, R¹..R^N]`, backward
/// `[p⁰, Y¹..Y^N, P¹..P^N]`.
pub(crate) struct FullSystem<'m, 'a> {
    m: &'m Market<'a>,
}

impl<'m, 'a> FullSystem<'m, 'a> {
    pub fn new(m: &'m Market<'a>) -> Self {
        Self { m }
    }
}

impl FbsdeSystem for FullSystem<'_, '_> {
    fn forward_dim(&self) -> usize {
        self.m.n() * (1 + 2 * self.m.agents.len())
    }

    fn backward_dim(&self) -> usize {
        self.forward_dim()
    }

    fn is_affine(&self) -> bool {
        self.m.spec.major.is_affine()
    }

    fn initial(&self, out: &mut [f64]) {
        let n = self.m.n();
        out.iter_mut().for_each(|o| *o = 0.0);
        out[..n].copy_from_slice(&self.m.spec.chi0);
        for (i, a) in self.m.agents.iter().enumerate() {
            out[n + i * n..n + (i + 1) * n].copy_from_slice(&a.xi);
        }
    }

    fn drift(&self, node: usize, fwd: &[f64], bwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        let n = m.n();
        let na = m.agents.len();
        let _ = fwd;
        let ys = &bwd[n..n + na * n];
        let ps = &bwd[n + na * n..];
        let mut my = vec![0.0; n];
        let mut mp = vec![0.0; n];
        m.mean(ys, &mut my);
        m.mean(ps, &mut mp);
        let mut b = vec![0.0; n];
        m.beta_rule(node, &bwd[..n], &my, &mp, &mut b);
        let t = m.t(node);
        let c0 = m.c0(node);
        let l0 = m.spec.major.l0.eval(t, c0, &[]);
        for j in 0..n {
            out[j] = b[j] + l0[j];
        }
        let linv = m.exo.lambda_inv.get(node);
        let mut tmp = vec![0.0; n];
        let mut d = vec![0.0; n];
        for (i, a) in m.agents.iter().enumerate() {
            let l = a.bundle.l.eval(t, c0, &a.ci);
            for j in 0..n {
                d[j] = ys[i * n + j] - my[j];
            }
            linalg::matvec(linv, &d, &mut tmp);
            let xo = n + i * n;
            for j in 0..n {
                out[xo + j] = -tmp[j] - b[j] + l[j];
            }
            for j in 0..n {
                d[j] = ps[i * n + j] - mp[j];
            }
            linalg::matvec(linv, &d, &mut tmp);
            let ro = n + na * n + i * n;
            for j in 0..n {
                out[ro + j] = tmp[j] + b[j];
            }
        }
    }

    fn noise(&self, node: usize, dw: &[f64], out: &mut [f64]) {
        let m = self.m;
        let n = m.n();
        out.iter_mut().for_each(|o| *o = 0.0);
        if dw.is_empty() {
            return;
        }
        let s0 = m.spec.major.s0.eval(m.t(node), m.c0(node), &[]);
        linalg::matvec(&s0, dw, &mut out[..n]);
        for (i, a) in m.agents.iter().enumerate() {
            agent_noise(m, a, node, dw, &mut out[n + i * n..n + (i + 1) * n]);
        }
    }

    fn driver(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        let n = m.n();
        let na = m.agents.len();
        m.spec.major.running.gradient(m.t(node), &fwd[..n], m.c0(node), &mut out[..n]);
        let mut tmp = vec![0.0; n];
        for (i, a) in m.agents.iter().enumerate() {
            let c = coefs(m, a, node);
            let xo = n + i * n;
            affine(&c.cf, &c.hf, &fwd[xo..xo + n], &mut out[xo..xo + n]);
            let ro = n + na * n + i * n;
            linalg::matvec(&c.cf, &fwd[ro..ro + n], &mut tmp);
            for j in 0..n {
                out[ro + j] = -tmp[j];
            }
        }
    }

    fn terminal(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        let n = m.n();
        let na = m.agents.len();
        let c0 = m.c0(node);
        if m.spec.maturity {
            out.iter_mut().for_each(|o| *o = 0.0);
            for j in 0..n {
                out[j] = -c0[j];
            }
            for i in 0..na {
                for j in 0..n {
                    out[n + i * n + j] = -c0[j];
                }
            }
            return;
        }
        m.spec.major.terminal.gradient(m.t(node), &fwd[..n], c0, &mut out[..n]);
        let kappa = m.kappa();
        let mut gs = vec![0.0; na * n];
        let cs: Vec<Coefs> = m.agents.iter().map(|a| coefs(m, a, node)).collect();
        for (i, c) in cs.iter().enumerate() {
            let xo = n + i * n;
            affine(&c.cg, &c.hg, &fwd[xo..xo + n], &mut gs[i * n..(i + 1) * n]);
        }
        let mut mg = vec![0.0; n];
        m.mean(&gs, &mut mg);
        let mut mr = vec![0.0; n];
        m.mean(&fwd[n + na * n..], &mut mr);
        let mut tmp = vec![0.0; n];
        for (i, c) in cs.iter().enumerate() {
            for j in 0..n {
                out[n + i * n + j] = kappa * mg[j] + gs[i * n + j];
            }
            let ro = n + na * n + i * n;
            let s: Vec<f64> = (0..n).map(|j| fwd[ro + j] + kappa * mr[j]).collect();
            linalg::matvec(&c.cg, &s, &mut tmp);
            for j in 0..n {
                out[ro + j] = -tmp[j];
            }
        }
    }
}

/// Clearing for a given per-capita flow: forward `[X¹..X^N]`, backward `[Y¹..Y^N]`.
pub(crate) struct ClearingSystem<'m, 'a> {
    m: &'m Market<'a>,
    flow: &'m NodeField,
}

impl<'m, 'a> ClearingSystem<'m, 'a> {
    pub fn new(m: &'m Market<'a>, flow: &'m NodeField) -> Self {
        Self { m, flow }
    }
}

impl FbsdeSystem for ClearingSystem<'_, '_> {
    fn forward_dim(&self) -> usize {
        self.m.n() * self.m.agents.len()
    }

    fn backward_dim(&self) -> usize {
        self.forward_dim()
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn initial(&self, out: &mut [f64]) {
        let n = self.m.n();
        for (i, a) in self.m.agents.iter().enumerate() {
            out[i * n..(i + 1) * n].copy_from_slice(&a.xi);
        }
    }

    fn drift(&self, node: usize, _fwd: &[f64], bwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        let n = m.n();
        let mut my = vec![0.0; n];
        m.mean(bwd, &mut my);
        let b = self.flow.get(node);
        let linv = m.exo.lambda_inv.get(node);
        let (t, c0) = (m.t(node), m.c0(node));
        let mut d = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for (i, a) in m.agents.iter().enumerate() {
            let l = a.bundle.l.eval(t, c0, &a.ci);
            for j in 0..n {
                d[j] = bwd[i * n + j] - my[j];
            }
            linalg::matvec(linv, &d, &mut tmp);
            for j in 0..n {
                out[i * n + j] = -tmp[j] - b[j] + l[j];
            }
        }
    }

    fn noise(&self, node: usize, dw: &[f64], out: &mut [f64]) {
        let n = self.m.n();
        for (i, a) in self.m.agents.iter().enumerate() {
            agent_noise(self.m, a, node, dw, &mut out[i * n..(i + 1) * n]);
        }
    }

    fn driver(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let n = self.m.n();
        for (i, a) in self.m.agents.iter().enumerate() {
            let c = coefs(self.m, a, node);
            affine(&c.cf, &c.hf, &fwd[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
    }

    fn terminal(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        let n = m.n();
        let c0 = m.c0(node);
        if m.spec.maturity {
            for i in 0..m.agents.len() {
                for j in 0..n {
                    out[i * n + j] = -c0[j];
                }
            }
            return;
        }
        for (i, a) in m.agents.iter().enumerate() {
            let c = coefs(m, a, node);
            affine(&c.cg, &c.hg, &fwd[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
        let mut mg = vec![0.0; n];
        m.mean(out, &mut mg);
        let kappa = m.kappa();
        for i in 0..m.agents.len() {
            for j in 0..n {
                out[i * n + j] += kappa * mg[j];
            }
        }
    }
}

/// One price taker facing an exogenous price: forward `X`, backward `Y`.
pub(crate) struct BestResponseSystem<'m, 'a> {
    m: &'m Market<'a>,
    agent: &'m Agent<'a>,
    price: &'m NodeField,
}

impl<'m, 'a> BestResponseSystem<'m, 'a> {
    pub fn new(m: &'m Market<'a>, agent: &'m Agent<'a>, price: &'m NodeField) -> Self {
        Self { m, agent, price }
    }
}

impl FbsdeSystem for BestResponseSystem<'_, '_> {
    fn forward_dim(&self) -> usize {
        self.m.n()
    }

    fn backward_dim(&self) -> usize {
        self.m.n()
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn initial(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.agent.xi);
    }

    fn drift(&self, node: usize, _fwd: &[f64], bwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        m.alpha_rule(node, bwd, self.price.get(node), out);
        let l = self.agent.bundle.l.eval(m.t(node), m.c0(node), &self.agent.ci);
        for (o, li) in out.iter_mut().zip(&l) {
            *o += li;
        }
    }

    fn noise(&self, node: usize, dw: &[f64], out: &mut [f64]) {
        agent_noise(self.m, self.agent, node, dw, out);
    }

    fn driver(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let c = coefs(self.m, self.agent, node);
        affine(&c.cf, &c.hf, fwd, out);
    }

    fn terminal(&self, node: usize, fwd: &[f64], out: &mut [f64]) {
        let m = self.m;
        if m.spec.maturity {
            for (o, c) in out.iter_mut().zip(m.c0(node)) {
                *o = -c;
            }
            return;
        }
        let c = coefs(m, self.agent, node);
        affine(&c.cg, &c.hg, fwd, out);
        for (o, p) in out.iter_mut().zip(self.price.get(node)) {
            *o -= m.spec.delta * p;
        }
    }
}
