use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::wasserstein::{wasserstein2_weighted_squared, EmpiricalMeasure};
use super::{epsilon_rate, price_gap};
use crate::error::{Error, Result};
use crate::finite_market::solve_full_equilibrium;
use crate::linalg;
use crate::mean_field::{solve_mfg, MfgSolution};
use crate::model::{MinorBundle, MinorPopulation, ModelSpec};
use crate::scenario::{evaluate_exogenous, mix_seed, sample_idiosyncratic, NodeField, NoiseLattice};

/// Gaps below this are treated as numerically zero in slope fits.
const ZERO_GAP: f64 = 1e-14;

/// One (N, resample) draw of the convergence study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_agents: usize,
    pub resample: usize,
    pub price_gap: f64,
    pub w2_g: f64,
    pub w2_rt: f64,
    pub int_w2_y: f64,
    pub int_w2_p: f64,
    pub epsilon_n: f64,
}

impl ConvergenceRow {
    pub fn rhs(&self) -> f64 {
        self.w2_g + self.w2_rt + self.int_w2_y + self.int_w2_p
    }
}

/// Resample averages at one N.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub n_agents: usize,
    pub mean_price_gap: f64,
    pub se_price_gap: f64,
    pub mean_w2_g: f64,
    pub mean_w2_rt: f64,
    pub mean_int_w2_y: f64,
    pub mean_int_w2_p: f64,
    pub mean_rhs: f64,
    pub se_rhs: f64,
    pub epsilon_n: f64,
}

/// Ordinary least squares on `(ln N, ln gap)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub n_used: Vec<usize>,
}

/// Does `gap ≤ C·rhs` hold with one `C` fitted on the smaller half of the
/// N list and then checked on all of it?
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub constant: f64,
    pub fitted_on: Vec<usize>,
    pub ratios: Vec<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub resamples: usize,
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<ConvergenceSummary>,
    /// `None` when fewer than three usable N remain.
    pub fit: Option<SlopeFit>,
    pub excluded_n: Vec<usize>,
    /// Every mean gap is numerically zero.
    pub degenerate: bool,
    pub inequality: InequalityCheck,
}

impl ConvergenceReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,resample,price_gap,w2_g,w2_rT,int_w2_y,int_w2_p,epsilon_N")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.n_agents, r.resample, r.price_gap, r.w2_g, r.w2_rt, r.int_w2_y, r.int_w2_p, r.epsilon_n
            )?;
        }
        Ok(())
    }
}

/// The four Wasserstein ingredients for one draw of atoms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct WassersteinTerms {
    pub w2_g: f64,
    pub w2_rt: f64,
    pub int_w2_y: f64,
    pub int_w2_p: f64,
}

impl WassersteinTerms {
    pub fn total(&self) -> f64 {
        self.w2_g + self.w2_rt + self.int_w2_y + self.int_w2_p
    }
}

/// Atom-indexed values of the mean-field fields needed by the RHS terms.
struct AtomClouds {
    n: usize,
    weights: Vec<f64>,
    g: Vec<NodeField>,
    r: Vec<NodeField>,
    y: Vec<NodeField>,
    p: Vec<NodeField>,
}

impl AtomClouds {
    fn new(spec: &ModelSpec, lattice: &NoiseLattice, mfg: &MfgSolution) -> Result<Self> {
        let exo = evaluate_exogenous(lattice, spec)?;
        let bundle = spec.minor.bundle(0);
        let n = spec.dims.n;
        let g = (0..mfg.atoms())
            .map(|a| {
                let x = mfg.atom_x(a);
                let ci = &spec.idio.atoms[a].c;
                NodeField::from_fn(lattice, n, |v, out| {
                    if lattice.is_terminal(v) {
                        let (t, c0) = (lattice.t(v), exo.c0.get(v));
                        out.copy_from_slice(&bundle.hg.eval(t, c0, ci));
                        linalg::matvec_add(&bundle.cg.eval(t, c0, ci), x.get(v), out);
                    }
                })
            })
            .collect();
        Ok(Self {
            n,
            weights: mfg.weights.clone(),
            g,
            r: (0..mfg.atoms()).map(|a| mfg.atom_r(a)).collect(),
            y: (0..mfg.atoms()).map(|a| mfg.atom_y(a)).collect(),
            p: (0..mfg.atoms()).map(|a| mfg.atom_p(a)).collect(),
        })
    }

    /// `W₂²` at node `v` between the cloud with empirical atom frequencies
    /// and the exact atom law.
    fn w2_sq(&self, field: &[NodeField], v: usize, freq: &[f64]) -> Result<f64> {
        let pick = |w: &[f64]| {
            let mut pts = Vec::new();
            let mut ws = Vec::new();
            for (a, &wa) in w.iter().enumerate() {
                if wa > 0.0 {
                    pts.extend_from_slice(field[a].get(v));
                    ws.push(wa);
                }
            }
            EmpiricalMeasure::weighted(self.n, pts, ws)
        };
        wasserstein2_weighted_squared(&pick(freq)?, &pick(&self.weights)?)
    }

    fn terms(&self, lattice: &NoiseLattice, atoms: &[usize]) -> Result<WassersteinTerms> {
        let mut counts = vec![0usize; self.weights.len()];
        for &a in atoms {
            counts[a] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / atoms.len() as f64).collect();
        let mut t = WassersteinTerms::default();
        for v in lattice.terminal_nodes() {
            let p = lattice.probability(v);
            t.w2_g += p * self.w2_sq(&self.g, v, &freq)?;
            t.w2_rt += p * self.w2_sq(&self.r, v, &freq)?;
        }
        let dt = lattice.dt();
        for v in lattice.non_terminal() {
            let p = lattice.probability(v) * dt;
            t.int_w2_y += p * self.w2_sq(&self.y, v, &freq)?;
            t.int_w2_p += p * self.w2_sq(&self.p, v, &freq)?;
        }
        Ok(t)
    }
}

fn homogeneous_with_agents(spec: &ModelSpec, agents: usize) -> Result<ModelSpec> {
    if !spec.minor.is_homogeneous() {
        return Err(Error::Validation("the convergence study needs a homogeneous minor population".into()));
    }
    let mut out = spec.clone().with_agents(agents);
    out.minor = MinorPopulation::Homogeneous(spec.minor.bundle(0).clone());
    Ok(out)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn fit_loglog(points: &[(usize, f64)]) -> Option<SlopeFit> {
    if points.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, g)| g.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = ssr / (m - 2.0);
    Some(SlopeFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / m + xbar * xbar / sxx)).sqrt(),
        n_used: points.iter().map(|(n, _)| *n).collect(),
    })
}

fn inequality_check(summary: &[ConvergenceSummary]) -> InequalityCheck {
    let fit_len = summary.len().div_ceil(2);
    let ratio = |s: &ConvergenceSummary| {
        if s.mean_price_gap <= ZERO_GAP {
            0.0
        } else if s.mean_rhs > 0.0 {
            s.mean_price_gap / s.mean_rhs
        } else {
            f64::INFINITY
        }
    };
    let ratios: Vec<f64> = summary.iter().map(ratio).collect();
    let constant = ratios[..fit_len].iter().copied().fold(0.0, f64::max);
    let holds = ratios.iter().all(|r| *r <= constant * (1.0 + 1e-9)) && constant.is_finite();
    InequalityCheck { constant, fitted_on: summary[..fit_len].iter().map(|s| s.n_agents).collect(), ratios, holds }
}

/// Monte Carlo study of the finite-N price against the mean-field price.
/// Each (N, resample) draws atoms with `mix_seed(seed, resample)`, solves
/// the homogeneous finite market and records the gap and the Wasserstein
/// terms. Results are aggregated in (N, resample) order.
pub fn convergence_study(
    spec: &ModelSpec,
    lattice: &NoiseLattice,
    n_list: &[usize],
    resamples: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() || n_list.contains(&0) || resamples == 0 {
        return Err(Error::Validation("N list must be non-empty and positive, with at least one resample".into()));
    }
    let base = homogeneous_with_agents(spec, 1)?;
    let mfg = solve_mfg(&base, lattice)?;
    let clouds = AtomClouds::new(&base, lattice, &mfg)?;
    let tasks: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| (0..resamples).map(move |r| (n, r))).collect();
    let rows = tasks
        .par_iter()
        .map(|&(agents, r)| {
            let local = homogeneous_with_agents(spec, agents)?;
            let atoms = sample_idiosyncratic(&local.idio, agents, mix_seed(seed, r as u64))?;
            let sol = solve_full_equilibrium(&local, lattice, &atoms)?;
            let terms = clouds.terms(lattice, &atoms)?;
            Ok(ConvergenceRow {
                n_agents: agents,
                resample: r,
                price_gap: price_gap(&sol.price, &mfg.price, lattice)?,
                w2_g: terms.w2_g,
                w2_rt: terms.w2_rt,
                int_w2_y: terms.int_w2_y,
                int_w2_p: terms.int_w2_p,
                epsilon_n: epsilon_rate(agents, spec.dims.n),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary: Vec<ConvergenceSummary> = rows
        .chunks(resamples)
        .map(|chunk| {
            let col = |f: fn(&ConvergenceRow) -> f64| chunk.iter().map(f).collect::<Vec<_>>();
            let (mean_price_gap, se_price_gap) = mean_se(&col(|r| r.price_gap));
            let (mean_rhs, se_rhs) = mean_se(&col(ConvergenceRow::rhs));
            ConvergenceSummary {
                n_agents: chunk[0].n_agents,
                mean_price_gap,
                se_price_gap,
                mean_w2_g: mean_se(&col(|r| r.w2_g)).0,
                mean_w2_rt: mean_se(&col(|r| r.w2_rt)).0,
                mean_int_w2_y: mean_se(&col(|r| r.int_w2_y)).0,
                mean_int_w2_p: mean_se(&col(|r| r.int_w2_p)).0,
                mean_rhs,
                se_rhs,
                epsilon_n: chunk[0].epsilon_n,
            }
        })
        .collect();

    let mut excluded_n = Vec::new();
    let mut points = Vec::new();
    for s in &summary {
        if s.n_agents == 4 || s.mean_price_gap < ZERO_GAP {
            excluded_n.push(s.n_agents);
        } else {
            points.push((s.n_agents, s.mean_price_gap));
        }
    }
    Ok(ConvergenceReport {
        seed,
        resamples,
        degenerate: summary.iter().all(|s| s.mean_price_gap < ZERO_GAP),
        fit: fit_loglog(&points),
        inequality: inequality_check(&summary),
        excluded_n,
        rows,
        summary,
    })
}

/// Coefficient-difference magnitudes between heterogeneous and homogeneous
/// bundles, evaluated along the homogeneous solution and averaged over agents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DeltaTerms {
    pub l: f64,
    pub sigma0: f64,
    pub sigma: f64,
    pub df: f64,
    pub cf_r: f64,
    pub terminal_g: f64,
    pub terminal_r: f64,
}

impl DeltaTerms {
    pub fn total(&self) -> f64 {
        self.l + self.sigma0 + self.sigma + self.df + self.cf_r + self.terminal_g + self.terminal_r
    }
}

/// Both sides of the heterogeneous stability estimate. The constant is
/// unknown, so no verdict is given.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `E∫|φ^He − φ^mfg|²`.
    pub lhs: f64,
    /// `E∫|φ^Ho − φ^mfg|²`.
    pub homogeneous_gap: f64,
    /// `E∫|φ^He − φ^Ho|²`.
    pub he_ho_gap: f64,
    pub delta: DeltaTerms,
    pub wasserstein: WassersteinTerms,
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Compare a heterogeneous market with its homogeneous counterpart on the
/// same atoms, both against the mean-field price of the homogeneous model.
pub fn stability_gap(
    hetero: &ModelSpec,
    homo: &ModelSpec,
    lattice: &NoiseLattice,
    atoms: &[usize],
) -> Result<StabilityReport> {
    if hetero.dims != homo.dims || hetero.noise != homo.noise {
        return Err(Error::Validation("heterogeneous and homogeneous models differ in dimensions or noise".into()));
    }
    let agents = homo.dims.agents;
    let homo = homogeneous_with_agents(homo, agents)?;
    let he = solve_full_equilibrium(hetero, lattice, atoms)?;
    let ho = solve_full_equilibrium(&homo, lattice, atoms)?;
    let base = homogeneous_with_agents(&homo, 1)?;
    let mfg = solve_mfg(&base, lattice)?;
    let clouds = AtomClouds::new(&base, lattice, &mfg)?;
    let exo = evaluate_exogenous(lattice, &homo)?;
    let n = homo.dims.n;
    let dt = lattice.dt();
    let kappa = homo.delta / (1.0 - homo.delta);
    let b0: &MinorBundle = homo.minor.bundle(0);

    let mut delta = DeltaTerms::default();
    for i in 0..agents {
        let bi = hetero.minor.bundle(i);
        let ci = &homo.idio.atoms[atoms[i]].c;
        let mut t_i = DeltaTerms::default();
        for v in 0..lattice.len() {
            let (t, c0) = (lattice.t(v), exo.c0.get(v));
            let p = lattice.probability(v);
            let ev = |b: &MinorBundle, f: fn(&MinorBundle) -> &crate::model::Coefficient| f(b).eval(t, c0, ci);
            let x = ho.x[i].get(v);
            let r = ho.r[i].get(v);
            if lattice.is_terminal(v) {
                if homo.maturity {
                    continue;
                }
                let dcg = diff(&ev(bi, |b| &b.cg), &ev(b0, |b| &b.cg));
                let mut g = diff(&ev(bi, |b| &b.hg), &ev(b0, |b| &b.hg));
                linalg::matvec_add(&dcg, x, &mut g);
                t_i.terminal_g += p * norm_sq(&g);
                let mut mr = vec![0.0; n];
                for (w, rf) in ho.weights.iter().zip(&ho.r) {
                    for (m, x) in mr.iter_mut().zip(rf.get(v)) {
                        *m += w * x;
                    }
                }
                let shifted: Vec<f64> = r.iter().zip(&mr).map(|(a, m)| a + kappa * m).collect();
                let mut out = vec![0.0; n];
                linalg::matvec(&dcg, &shifted, &mut out);
                t_i.terminal_r += p * norm_sq(&out);
            } else {
                let w = p * dt;
                t_i.l += w * sq_diff(&ev(bi, |b| &b.l), &ev(b0, |b| &b.l));
                t_i.sigma0 += w * sq_diff(&ev(bi, |b| &b.sigma0), &ev(b0, |b| &b.sigma0));
                t_i.sigma += w * sq_diff(&ev(bi, |b| &b.sigma), &ev(b0, |b| &b.sigma));
                let dcf = diff(&ev(bi, |b| &b.cf), &ev(b0, |b| &b.cf));
                let mut df = diff(&ev(bi, |b| &b.hf), &ev(b0, |b| &b.hf));
                linalg::matvec_add(&dcf, x, &mut df);
                t_i.df += w * norm_sq(&df);
                let mut cr = vec![0.0; n];
                linalg::matvec(&dcf, r, &mut cr);
                t_i.cf_r += w * norm_sq(&cr);
            }
        }
        let a = 1.0 / agents as f64;
        delta.l += a * t_i.l;
        delta.sigma0 += a * t_i.sigma0;
        delta.sigma += a * t_i.sigma;
        delta.df += a * t_i.df;
        delta.cf_r += a * t_i.cf_r;
        delta.terminal_g += a * t_i.terminal_g;
        delta.terminal_r += a * t_i.terminal_r;
    }
    Ok(StabilityReport {
        lhs: price_gap(&he.price, &mfg.price, lattice)?,
        homogeneous_gap: price_gap(&ho.price, &mfg.price, lattice)?,
        he_ho_gap: price_gap(&he.price, &ho.price, lattice)?,
        delta,
        wasserstein: clouds.terms(lattice, atoms)?,
    })
}
