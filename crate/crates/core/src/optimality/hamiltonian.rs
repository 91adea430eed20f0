use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{MinorBundle, ModelSpec};

fn lambda_at(spec: &ModelSpec, t: f64, c0: &[f64]) -> Vec<f64> {
    spec.lambda.eval(t, c0, &[])
}

fn inverse(n: usize, m: &[f64], what: &str) -> Result<Vec<f64>> {
    linalg::invert(n, m).ok_or_else(|| Error::Assumption(format!("{what} is singular")))
}

fn quad(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut mb = vec![0.0; b.len()];
    linalg::matvec(m, b, &mut mb);
    linalg::dot(a, &mb)
}

/// `V̄⁰ = (Λ⁰ + 2Λ)⁻¹`.
fn vbar0(spec: &ModelSpec, t: f64, c0: &[f64]) -> Result<Vec<f64>> {
    let l = lambda_at(spec, t, c0);
    let l0 = spec.lambda0.eval(t, c0, &[]);
    let s: Vec<f64> = l0.iter().zip(&l).map(|(a, b)| a + 2.0 * b).collect();
    inverse(spec.dims.n, &s, "Λ⁰ + 2Λ")
}

fn f_bar(b: &MinorBundle, t: f64, c0: &[f64], ci: &[f64], x: &[f64]) -> f64 {
    0.5 * quad(&b.cf.eval(t, c0, ci), x, x) + linalg::dot(&b.hf.eval(t, c0, ci), x)
}

fn df_bar(b: &MinorBundle, t: f64, c0: &[f64], ci: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = b.hf.eval(t, c0, ci);
    linalg::matvec_add(&b.cf.eval(t, c0, ci), x, &mut out);
    out
}

/// Minor Hamiltonian `⟨y, α + l⟩ + ⟨φ, α⟩ + ½⟨α, Λα⟩ + f̄(x)` of agent `agent`.
#[allow(clippy::too_many_arguments)]
pub fn minor_hamiltonian(
    spec: &ModelSpec,
    agent: usize,
    t: f64,
    c0: &[f64],
    ci: &[f64],
    x: &[f64],
    y: &[f64],
    alpha: &[f64],
    phi: &[f64],
) -> f64 {
    let b = spec.minor.bundle(agent);
    let l = b.l.eval(t, c0, ci);
    let drift: Vec<f64> = alpha.iter().zip(&l).map(|(a, b)| a + b).collect();
    linalg::dot(y, &drift)
        + linalg::dot(phi, alpha)
        + 0.5 * quad(&lambda_at(spec, t, c0), alpha, alpha)
        + f_bar(b, t, c0, ci, x)
}

/// `α̂(y, φ) = −Λ̄(y + φ)`.
pub fn minor_minimizer(spec: &ModelSpec, t: f64, c0: &[f64], y: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dims.n;
    let inv = inverse(n, &lambda_at(spec, t, c0), "Λ")?;
    let s: Vec<f64> = y.iter().zip(phi).map(|(a, b)| a + b).collect();
    let mut out = vec![0.0; n];
    linalg::matvec(&inv, &s, &mut out);
    out.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}

/// Arguments of the N-agent major Hamiltonian; per-agent slices are indexed by agent.
#[derive(Clone, Copy, Debug)]
pub struct NAgentPoint<'a> {
    pub t: f64,
    pub c0: &'a [f64],
    pub ci: &'a [Vec<f64>],
    /// Unnormalized major state X⁰.
    pub x0: &'a [f64],
    pub x: &'a [Vec<f64>],
    pub y: &'a [Vec<f64>],
    pub p0: &'a [f64],
    pub p: &'a [Vec<f64>],
    pub r: &'a [Vec<f64>],
}

fn mean(v: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n];
    for row in v {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b / v.len() as f64;
        }
    }
    m
}

/// N-agent major Hamiltonian in unnormalized units, `β` the unnormalized flow.
pub fn major_hamiltonian(spec: &ModelSpec, pt: &NAgentPoint<'_>, beta: &[f64]) -> Result<f64> {
    let n = spec.dims.n;
    let agents = pt.x.len();
    if agents == 0 || [pt.y.len(), pt.p.len(), pt.r.len(), pt.ci.len()].iter().any(|&l| l != agents) {
        return Err(Error::Validation("per-agent arguments must have one entry per agent".into()));
    }
    let nf = agents as f64;
    let lam = lambda_at(spec, pt.t, pt.c0);
    let inv = inverse(n, &lam, "Λ")?;
    let lam0 = spec.lambda0.eval(pt.t, pt.c0, &[]);
    let l0: Vec<f64> = spec.major.l0.eval(pt.t, pt.c0, &[]).iter().map(|v| v * nf).collect();
    let my = mean(pt.y, n);
    let mut h = linalg::dot(pt.p0, &beta.iter().zip(&l0).map(|(a, b)| a + b).collect::<Vec<_>>());
    for i in 0..agents {
        let b = spec.minor.bundle(i);
        let dev: Vec<f64> = pt.y[i].iter().zip(&my).map(|(a, b)| a - b).collect();
        let mut drift = vec![0.0; n];
        linalg::matvec(&inv, &dev, &mut drift);
        let l = b.l.eval(pt.t, pt.c0, &pt.ci[i]);
        for j in 0..n {
            drift[j] = -drift[j] - beta[j] / nf + l[j];
        }
        h += linalg::dot(&pt.p[i], &drift);
        h -= linalg::dot(&pt.r[i], &df_bar(b, pt.t, pt.c0, &pt.ci[i], &pt.x[i]));
    }
    let bn: Vec<f64> = beta.iter().map(|v| v / nf).collect();
    let mut lb = vec![0.0; n];
    linalg::matvec(&lam, &bn, &mut lb);
    let price: Vec<f64> = lb.iter().zip(&my).map(|(a, b)| a - b).collect();
    h += linalg::dot(beta, &price) + 0.5 * quad(&lam0, beta, &bn);
    let xn: Vec<f64> = pt.x0.iter().map(|v| v / nf).collect();
    h += nf * spec.major.running.value(pt.t, &xn, pt.c0);
    Ok(h)
}

/// `β̂ = N V̄⁰(−p⁰ + 𝔪(y) + 𝔪(p))`.
pub fn major_minimizer(spec: &ModelSpec, pt: &NAgentPoint<'_>) -> Result<Vec<f64>> {
    let n = spec.dims.n;
    let v = vbar0(spec, pt.t, pt.c0)?;
    let (my, mp) = (mean(pt.y, n), mean(pt.p, n));
    let s: Vec<f64> = (0..n).map(|j| -pt.p0[j] + my[j] + mp[j]).collect();
    let mut out = vec![0.0; n];
    linalg::matvec(&v, &s, &mut out);
    out.iter_mut().for_each(|o| *o *= pt.x.len() as f64);
    Ok(out)
}

/// Arguments of the mean-field Hamiltonian for the representative agent.
#[derive(Clone, Copy, Debug)]
pub struct MfgPoint<'a> {
    pub t: f64,
    pub c0: &'a [f64],
    pub c1: &'a [f64],
    pub x0: &'a [f64],
    pub x1: &'a [f64],
    pub y1: &'a [f64],
    pub ybar: &'a [f64],
    pub p0: &'a [f64],
    pub p1: &'a [f64],
    pub pbar: &'a [f64],
    pub r1: &'a [f64],
}

/// Mean-field Hamiltonian
/// `⟨p⁰, β + 𝔩₀⟩ + ⟨p¹, −Λ̄(y¹ − ȳ) + l⟩ − ⟨p̄, β⟩ − ⟨r¹, ∂f̄(x¹)⟩ + ⟨β, −ȳ + Λβ⟩ + ½⟨β, Λ⁰β⟩ + 𝔣̄₀(x⁰)`.
pub fn mfg_hamiltonian(spec: &ModelSpec, pt: &MfgPoint<'_>, beta: &[f64]) -> Result<f64> {
    let n = spec.dims.n;
    let lam = lambda_at(spec, pt.t, pt.c0);
    let inv = inverse(n, &lam, "Λ")?;
    let lam0 = spec.lambda0.eval(pt.t, pt.c0, &[]);
    let b = spec.minor.bundle(0);
    let l0 = spec.major.l0.eval(pt.t, pt.c0, &[]);
    let l = b.l.eval(pt.t, pt.c0, pt.c1);
    let mut h = linalg::dot(pt.p0, &beta.iter().zip(&l0).map(|(a, b)| a + b).collect::<Vec<_>>());
    let dev: Vec<f64> = pt.y1.iter().zip(pt.ybar).map(|(a, b)| a - b).collect();
    let mut drift = vec![0.0; n];
    linalg::matvec(&inv, &dev, &mut drift);
    for j in 0..n {
        drift[j] = -drift[j] + l[j];
    }
    h += linalg::dot(pt.p1, &drift) - linalg::dot(pt.pbar, beta);
    h -= linalg::dot(pt.r1, &df_bar(b, pt.t, pt.c0, pt.c1, pt.x1));
    let mut lb = vec![0.0; n];
    linalg::matvec(&lam, beta, &mut lb);
    let price: Vec<f64> = lb.iter().zip(pt.ybar).map(|(a, b)| a - b).collect();
    h += linalg::dot(beta, &price) + 0.5 * quad(&lam0, beta, beta);
    h += spec.major.running.value(pt.t, pt.x0, pt.c0);
    Ok(h)
}

/// `β̂ = V̄⁰(−p⁰ + ȳ + p̄)`.
pub fn mfg_minimizer(spec: &ModelSpec, pt: &MfgPoint<'_>) -> Result<Vec<f64>> {
    let n = spec.dims.n;
    let v = vbar0(spec, pt.t, pt.c0)?;
    let s: Vec<f64> = (0..n).map(|j| -pt.p0[j] + pt.ybar[j] + pt.pbar[j]).collect();
    let mut out = vec![0.0; n];
    linalg::matvec(&v, &s, &mut out);
    Ok(out)
}
