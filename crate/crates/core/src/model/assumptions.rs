use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{MajorCost, MinorBundle, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// Number of secant pairs used to estimate convexity of callable costs.
pub const SECANT_PAIRS: usize = 256;

/// One evaluation point for the coefficient checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePoint {
    pub t: f64,
    pub c0: Vec<f64>,
    pub ci: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClauseResult {
    pub clause: String,
    pub status: ClauseStatus,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub clauses: Vec<ClauseResult>,
    pub gamma_f: Option<f64>,
    pub gamma_g: Option<f64>,
    pub gamma0_f: Option<f64>,
    pub gamma0_g: Option<f64>,
    pub a_const: Option<f64>,
    /// Eigenvalue range of Λ over the sample points.
    pub lambda_bounds: Option<(f64, f64)>,
    /// Eigenvalue range of Λ⁰ + 2Λ over the sample points.
    pub major_bounds: Option<(f64, f64)>,
    pub beta1: Option<f64>,
    pub mu1: Option<f64>,
    pub failures: Vec<String>,
}

impl AssumptionReport {
    /// No clause failed. Inconclusive clauses do not count as failures.
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.status != ClauseStatus::Fail)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == name)
    }

    fn push(&mut self, clause: &str, status: ClauseStatus, detail: String) {
        if status == ClauseStatus::Fail {
            self.failures.push(format!("{clause}: {detail}"));
        }
        self.clauses.push(ClauseResult { clause: clause.into(), status, detail });
    }

    fn merge(&mut self, other: AssumptionReport) {
        self.clauses.extend(other.clauses);
        self.failures.extend(other.failures);
        self.gamma_f = self.gamma_f.or(other.gamma_f);
        self.gamma_g = self.gamma_g.or(other.gamma_g);
        self.gamma0_f = self.gamma0_f.or(other.gamma0_f);
        self.gamma0_g = self.gamma0_g.or(other.gamma0_g);
        self.a_const = self.a_const.or(other.a_const);
        self.lambda_bounds = self.lambda_bounds.or(other.lambda_bounds);
        self.major_bounds = self.major_bounds.or(other.major_bounds);
    }
}

fn status(ok: bool) -> ClauseStatus {
    if ok {
        ClauseStatus::Pass
    } else {
        ClauseStatus::Fail
    }
}

fn describe(p: &SamplePoint) -> String {
    format!("t={}, c0={:?}, ci={:?}", p.t, p.c0, p.ci)
}

fn bundles(spec: &ModelSpec) -> Vec<&MinorBundle> {
    (0..spec.dims.agents).map(|i| spec.minor.bundle(i)).collect()
}

/// Minor-A(i), Minor-A(iv) and Minor-B. When `candidate_c` is `None` the
/// pointwise average of `c^g` over the sample points is used.
pub fn check_minor_assumptions(
    spec: &ModelSpec,
    candidate_c: Option<&[f64]>,
    sample_points: &[SamplePoint],
) -> Result<AssumptionReport> {
    spec.validate()?;
    if sample_points.is_empty() {
        return Err(Error::Validation("no sample points given".into()));
    }
    let n = spec.dims.n;
    let mut report = AssumptionReport::default();

    let mut lam = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for (k, p) in sample_points.iter().enumerate() {
        let (lo, hi) = linalg::sym_eigen_bounds(n, &spec.lambda.eval(p.t, &p.c0, &[]));
        if lo < lam.0 {
            lam.0 = lo;
            lam.2 = k;
        }
        lam.1 = lam.1.max(hi);
    }
    report.lambda_bounds = Some((lam.0, lam.1));
    report.push(
        "Minor-A(i)",
        status(lam.0 > 0.0),
        format!("eigenvalues of Lambda in [{}, {}], minimum at {}", lam.0, lam.1, describe(&sample_points[lam.2])),
    );

    let mut gf = (f64::INFINITY, 0usize);
    let mut gg = (f64::INFINITY, 0usize);
    let mut cg_sum = vec![0.0; n * n];
    let mut count = 0usize;
    for b in bundles(spec) {
        for (k, p) in sample_points.iter().enumerate() {
            let (lo, _) = linalg::sym_eigen_bounds(n, &b.cf.eval(p.t, &p.c0, &p.ci));
            if lo < gf.0 {
                gf = (lo, k);
            }
            let cg = b.cg.eval(p.t, &p.c0, &p.ci);
            let (lo, _) = linalg::sym_eigen_bounds(n, &cg);
            if lo < gg.0 {
                gg = (lo, k);
            }
            for (s, v) in cg_sum.iter_mut().zip(&cg) {
                *s += v;
            }
            count += 1;
        }
    }
    report.gamma_f = Some(gf.0);
    if spec.maturity {
        report.push("Minor-A(iv)", status(gf.0 > 0.0), format!("gamma_f = {} (maturity mode: terminal cost is linear, gamma_g not required)", gf.0));
        report.push("Minor-B", ClauseStatus::Pass, "maturity mode: no discounted terminal price term".into());
        report.a_const = Some(0.0);
        return Ok(report);
    }
    report.gamma_g = Some(gg.0);
    report.push(
        "Minor-A(iv)",
        status(gf.0 > 0.0 && gg.0 > 0.0),
        format!(
            "gamma_f = {} (at {}), gamma_g = {} (at {})",
            gf.0,
            describe(&sample_points[gf.1]),
            gg.0,
            describe(&sample_points[gg.1])
        ),
    );

    let candidate: Vec<f64> = match candidate_c {
        Some(c) => {
            if c.len() != n * n {
                return Err(Error::Shape { name: "candidate_c".into(), expected: (n, n), found: (c.len(), 1) });
            }
            c.to_vec()
        }
        None => cg_sum.iter().map(|v| v / count as f64).collect(),
    };
    let factor = spec.delta / (1.0 - spec.delta);
    let mut worst = (0.0f64, 0usize);
    for b in bundles(spec) {
        for (k, p) in sample_points.iter().enumerate() {
            let cg = b.cg.eval(p.t, &p.c0, &p.ci);
            let diff: Vec<f64> = candidate.iter().zip(&cg).map(|(a, b)| a - b).collect();
            let norm = linalg::operator_norm(n, n, &diff);
            if norm > worst.0 {
                worst = (norm, k);
            }
        }
    }
    let a = factor * worst.0;
    report.a_const = Some(a);
    report.push(
        "Minor-B",
        status(a < gg.0),
        if a < gg.0 {
            format!("a = {a} < gamma_g = {}", gg.0)
        } else {
            format!("a = {a} >= gamma_g = {} (worst at {})", gg.0, describe(&sample_points[worst.1]))
        },
    );
    Ok(report)
}

/// Convexity constant of a major cost: exact for quadratics, secant estimate otherwise.
fn convexity(
    cost: &MajorCost,
    n: usize,
    sample_points: &[SamplePoint],
    half_width: f64,
    rng: &mut ChaCha8Rng,
) -> (Option<f64>, ClauseStatus, String) {
    match cost {
        MajorCost::Quadratic { curvature, .. } => {
            let mut lo = f64::INFINITY;
            for p in sample_points {
                lo = lo.min(linalg::sym_eigen_bounds(n, &curvature.eval(p.t, &p.c0, &[])).0);
            }
            (Some(lo), status(lo > 0.0), format!("minimum curvature eigenvalue {lo}"))
        }
        MajorCost::Custom(f) => {
            let mut est = f64::INFINITY;
            let mut witness = String::new();
            let mut g1 = vec![0.0; n];
            let mut g2 = vec![0.0; n];
            for k in 0..SECANT_PAIRS {
                let p = &sample_points[k % sample_points.len()];
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-half_width..=half_width)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-half_width..=half_width)).collect();
                let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dd = linalg::dot(&d, &d);
                if dd == 0.0 {
                    continue;
                }
                f.gradient(p.t, &x, &p.c0, &mut g1);
                f.gradient(p.t, &y, &p.c0, &mut g2);
                let dg: Vec<f64> = g2.iter().zip(&g1).map(|(a, b)| a - b).collect();
                let s = linalg::dot(&dg, &d) / dd;
                if !s.is_finite() {
                    return (None, ClauseStatus::Inconclusive, format!("non-finite secant at x={x:?}, x'={y:?}"));
                }
                if s < est {
                    est = s;
                    witness = format!("x={x:?}, x'={y:?}, {}", describe(p));
                }
            }
            if !est.is_finite() {
                return (None, ClauseStatus::Inconclusive, "no usable secant pairs".into());
            }
            (Some(est), status(est > 0.0), format!("secant estimate {est} over {SECANT_PAIRS} pairs, minimum at {witness}"))
        }
    }
}

/// Major(i) and Major(v). Callable costs are probed on `[-1, 1]^n`.
pub fn check_major_assumptions(spec: &ModelSpec, sample_points: &[SamplePoint]) -> Result<AssumptionReport> {
    check_major_assumptions_in_box(spec, sample_points, 1.0)
}

/// As [`check_major_assumptions`], with secant pairs drawn from `[-half_width, half_width]^n`.
pub fn check_major_assumptions_in_box(
    spec: &ModelSpec,
    sample_points: &[SamplePoint],
    half_width: f64,
) -> Result<AssumptionReport> {
    spec.validate()?;
    if sample_points.is_empty() {
        return Err(Error::Validation("no sample points given".into()));
    }
    let n = spec.dims.n;
    let mut report = AssumptionReport::default();
    let mut bounds = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for (k, p) in sample_points.iter().enumerate() {
        let lam = spec.lambda.eval(p.t, &p.c0, &[]);
        let lam0 = spec.lambda0.eval(p.t, &p.c0, &[]);
        let m: Vec<f64> = lam0.iter().zip(&lam).map(|(a, b)| a + 2.0 * b).collect();
        let (lo, hi) = linalg::sym_eigen_bounds(n, &m);
        if lo < bounds.0 {
            bounds.0 = lo;
            bounds.2 = k;
        }
        bounds.1 = bounds.1.max(hi);
    }
    report.major_bounds = Some((bounds.0, bounds.1));
    report.push(
        "Major(i)",
        status(bounds.0 > 0.0),
        format!(
            "eigenvalues of Lambda0 + 2 Lambda in [{}, {}], minimum at {}",
            bounds.0,
            bounds.1,
            describe(&sample_points[bounds.2])
        ),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (gf, sf, df) = convexity(&spec.major.running, n, sample_points, half_width, &mut rng);
    report.gamma0_f = gf;
    report.push("Major(v) running", sf, df);
    if spec.maturity {
        report.push("Major(v) terminal", ClauseStatus::Pass, "maturity mode: terminal cost is linear".into());
    } else {
        let (gg, sg, dg) = convexity(&spec.major.terminal, n, sample_points, half_width, &mut rng);
        report.gamma0_g = gg;
        report.push("Major(v) terminal", sg, dg);
    }
    Ok(report)
}

/// Minor and major checks together with the derived monotonicity constants.
pub fn check_all(spec: &ModelSpec, sample_points: &[SamplePoint]) -> Result<AssumptionReport> {
    let mut report = check_minor_assumptions(spec, None, sample_points)?;
    report.merge(check_major_assumptions(spec, sample_points)?);
    let n_agents = spec.dims.agents as f64;
    if let (Some(g0f), Some(gf)) = (report.gamma0_f, report.gamma_f) {
        report.beta1 = Some((g0f / n_agents).min(gf));
    }
    if let (Some(g0g), Some(gg), Some(a)) = (report.gamma0_g, report.gamma_g, report.a_const) {
        report.mu1 = Some((g0g / n_agents).min(gg - a));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, Dimensions, MinorBundle, MinorPopulation, ModelSpec};
    use std::sync::Arc;

    fn scalar_spec(delta: f64, cg: f64) -> ModelSpec {
        let dims = Dimensions::new(1, 0, 0, 1).unwrap();
        let mut spec = ModelSpec::zero(dims);
        spec.delta = delta;
        spec.minor = MinorPopulation::Homogeneous(MinorBundle::quadratic(&dims, Coefficient::scalar(1.0), Coefficient::scalar(cg)));
        spec.major = super::super::MajorSpec::quadratic(&dims, Coefficient::scalar(1.0), Coefficient::scalar(1.0));
        spec.lambda0 = Coefficient::scalar(2.0);
        spec
    }

    fn points() -> Vec<SamplePoint> {
        vec![SamplePoint { t: 0.0, c0: vec![0.0], ci: vec![] }]
    }

    #[test]
    fn minor_b_delta_zero_passes() {
        let r = check_minor_assumptions(&scalar_spec(0.0, 1.0), Some(&[7.0]), &points()).unwrap();
        assert_eq!(r.a_const, Some(0.0));
        assert!(r.passed());
    }

    #[test]
    fn minor_b_exact_cancellation() {
        let r = check_minor_assumptions(&scalar_spec(0.5, 1.0), Some(&[1.0]), &points()).unwrap();
        assert_eq!(r.a_const, Some(0.0));
        assert_eq!(r.gamma_g, Some(1.0));
        assert!(r.passed());
    }

    #[test]
    fn minor_b_fails_for_large_delta() {
        let r = check_minor_assumptions(&scalar_spec(0.9, 1.0), Some(&[0.0]), &points()).unwrap();
        assert!((r.a_const.unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(r.clause("Minor-B").unwrap().status, ClauseStatus::Fail);
        assert!(!r.passed());
    }

    #[test]
    fn major_bounds_scalar() {
        let r = check_major_assumptions(&scalar_spec(0.0, 1.0), &points()).unwrap();
        assert_eq!(r.major_bounds, Some((4.0, 4.0)));
        assert_eq!(r.gamma0_g, Some(1.0));
        let all = check_all(&scalar_spec(0.0, 1.0), &points()).unwrap();
        assert!(all.passed());
        assert!(all.beta1.unwrap() > 0.0 && all.mu1.unwrap() > 0.0);
    }

    struct Concave;
    impl crate::model::ConvexCost for Concave {
        fn value(&self, _t: f64, x: &[f64], _c0: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
        fn gradient(&self, _t: f64, x: &[f64], _c0: &[f64], out: &mut [f64]) {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -v;
            }
        }
    }

    #[test]
    fn concave_callable_fails_secant_test() {
        let mut spec = scalar_spec(0.0, 1.0);
        spec.major.running = MajorCost::Custom(Arc::new(Concave));
        let r = check_major_assumptions(&spec, &points()).unwrap();
        assert!(r.gamma0_f.unwrap() <= -1.0 + 1e-12);
        assert_eq!(r.clause("Major(v) running").unwrap().status, ClauseStatus::Fail);
    }

    #[test]
    fn reports_are_pure() {
        let spec = scalar_spec(0.3, 1.0);
        assert_eq!(check_all(&spec, &points()).unwrap(), check_all(&spec, &points()).unwrap());
    }
}
