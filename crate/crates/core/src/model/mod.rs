//! Market model: dimensions, coefficients, standing-assumption checks and the
//! major-agent scaling.

mod assumptions;
mod coefficient;
mod file;
mod scaling;

use std::fmt;
use std::sync::Arc;

pub use assumptions::{
    check_all, check_major_assumptions, check_minor_assumptions, AssumptionReport, ClauseResult,
    ClauseStatus, SamplePoint, SECANT_PAIRS,
};
pub use coefficient::{Coefficient, CoefficientKind};
pub use file::{load_model, parse_model, ModelFormat};
pub use scaling::{scale_major, ScaledMajor};

use crate::error::{Error, Result};

/// Problem dimensions. `d0` and `d` may be zero (noiseless mode).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Dimensions {
    /// Number of securities.
    pub n: usize,
    /// Common Brownian dimension.
    pub d0: usize,
    /// Idiosyncratic Brownian dimension per minor agent.
    pub d: usize,
    /// Number of minor agents.
    pub agents: usize,
}

impl Dimensions {
    pub fn new(n: usize, d0: usize, d: usize, agents: usize) -> Result<Self> {
        let dims = Self { n, d0, d, agents };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("dimension n must be positive".into()));
        }
        if self.agents == 0 {
            return Err(Error::Validation("agent count N must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficients of one minor agent: running drift `l`, volatilities, and the
/// affine cost gradients `c^f x + h^f`, `c^g x + h^g`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinorBundle {
    pub l: Coefficient,
    pub sigma0: Coefficient,
    pub sigma: Coefficient,
    pub cf: Coefficient,
    pub hf: Coefficient,
    pub cg: Coefficient,
    pub hg: Coefficient,
}

impl MinorBundle {
    /// All-zero drifts and volatilities with the given cost curvatures.
    pub fn quadratic(dims: &Dimensions, cf: Coefficient, cg: Coefficient) -> Self {
        let n = dims.n;
        Self {
            l: Coefficient::zeros(n, 1),
            sigma0: Coefficient::zeros(n, dims.d0),
            sigma: Coefficient::zeros(n, dims.d),
            cf,
            hf: Coefficient::zeros(n, 1),
            cg,
            hg: Coefficient::zeros(n, 1),
        }
    }

    pub fn validate(&self, dims: &Dimensions, c_dim: usize, label: &str) -> Result<()> {
        let n = dims.n;
        let name = |s: &str| format!("{label}.{s}");
        self.l.validate(&name("l"), n, 1, n, c_dim)?;
        self.sigma0.validate(&name("sigma0"), n, dims.d0, n, c_dim)?;
        self.sigma.validate(&name("sigma"), n, dims.d, n, c_dim)?;
        self.cf.validate(&name("cf"), n, n, n, c_dim)?;
        self.hf.validate(&name("hf"), n, 1, n, c_dim)?;
        self.cg.validate(&name("cg"), n, n, n, c_dim)?;
        self.hg.validate(&name("hg"), n, 1, n, c_dim)?;
        if !self.cf.is_symmetric() {
            return Err(Error::Validation(format!("coefficient `{}` must be symmetric", name("cf"))));
        }
        if !self.cg.is_symmetric() {
            return Err(Error::Validation(format!("coefficient `{}` must be symmetric", name("cg"))));
        }
        Ok(())
    }
}

/// One shared bundle, or one bundle per agent.
#[derive(Clone, Debug, PartialEq)]
pub enum MinorPopulation {
    Homogeneous(MinorBundle),
    Heterogeneous(Vec<MinorBundle>),
}

impl MinorPopulation {
    pub fn bundle(&self, agent: usize) -> &MinorBundle {
        match self {
            MinorPopulation::Homogeneous(b) => b,
            MinorPopulation::Heterogeneous(v) => &v[agent],
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match self {
            MinorPopulation::Homogeneous(_) => true,
            MinorPopulation::Heterogeneous(v) => v.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

/// A convex major-agent cost supplied as a callable.
pub trait ConvexCost: Send + Sync {
    fn value(&self, t: f64, x: &[f64], c0: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64], c0: &[f64], out: &mut [f64]);
}

/// Major running cost 𝔣̄₀ or terminal cost 𝔤₀.
#[derive(Clone)]
pub enum MajorCost {
    /// `½⟨x, C x⟩ + ⟨h(t, c⁰), x⟩`, gradient `C x + h`.
    Quadratic { curvature: Coefficient, linear: Coefficient },
    Custom(Arc<dyn ConvexCost>),
}

impl fmt::Debug for MajorCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MajorCost::Quadratic { curvature, linear } => {
                f.debug_struct("Quadratic").field("curvature", curvature).field("linear", linear).finish()
            }
            MajorCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl MajorCost {
    pub fn quadratic(curvature: Coefficient, linear: Coefficient) -> Self {
        MajorCost::Quadratic { curvature, linear }
    }

    pub fn zero(n: usize) -> Self {
        Self::quadratic(Coefficient::zeros(n, n), Coefficient::zeros(n, 1))
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, MajorCost::Quadratic { .. })
    }

    pub fn value(&self, t: f64, x: &[f64], c0: &[f64]) -> f64 {
        match self {
            MajorCost::Quadratic { curvature, linear } => {
                let n = x.len();
                let c = curvature.eval(t, c0, &[]);
                let h = linear.eval(t, c0, &[]);
                let mut cx = vec![0.0; n];
                crate::linalg::matvec(&c, x, &mut cx);
                0.5 * crate::linalg::dot(x, &cx) + crate::linalg::dot(&h, x)
            }
            MajorCost::Custom(f) => f.value(t, x, c0),
        }
    }

    pub fn gradient(&self, t: f64, x: &[f64], c0: &[f64], out: &mut [f64]) {
        match self {
            MajorCost::Quadratic { curvature, linear } => {
                let n = x.len();
                let mut c = vec![0.0; n * n];
                curvature.eval_into(t, c0, &[], &mut c);
                linear.eval_into(t, c0, &[], out);
                crate::linalg::matvec_add(&c, x, out);
            }
            MajorCost::Custom(f) => f.gradient(t, x, c0, out),
        }
    }

    fn validate(&self, name: &str, n: usize) -> Result<()> {
        if let MajorCost::Quadratic { curvature, linear } = self {
            curvature.validate(&format!("{name}.curvature"), n, n, n, 0)?;
            linear.validate(&format!("{name}.linear"), n, 1, n, 0)?;
            if !curvature.is_symmetric() {
                return Err(Error::Validation(format!("coefficient `{name}.curvature` must be symmetric")));
            }
        }
        Ok(())
    }
}

/// Major-agent coefficients in normalized units.
#[derive(Clone, Debug)]
pub struct MajorSpec {
    /// Normalized drift 𝔩₀(t, c⁰).
    pub l0: Coefficient,
    /// Normalized volatility 𝔰₀(t, c⁰), `n × d0`.
    pub s0: Coefficient,
    /// Running cost 𝔣̄₀.
    pub running: MajorCost,
    /// Terminal cost 𝔤₀.
    pub terminal: MajorCost,
}

impl MajorSpec {
    pub fn quadratic(dims: &Dimensions, cf0: Coefficient, cg0: Coefficient) -> Self {
        let n = dims.n;
        Self {
            l0: Coefficient::zeros(n, 1),
            s0: Coefficient::zeros(n, dims.d0),
            running: MajorCost::quadratic(cf0, Coefficient::zeros(n, 1)),
            terminal: MajorCost::quadratic(cg0, Coefficient::zeros(n, 1)),
        }
    }

    pub fn is_affine(&self) -> bool {
        self.running.is_affine() && self.terminal.is_affine()
    }
}

/// Law of the exogenous common process c⁰.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum C0Law {
    Constant { value: Vec<f64> },
    /// `c⁰_{k+1} = c⁰_k + drift·Δt + vol·ΔW⁰`, `vol` is `n × d0` row-major.
    Walk { initial: Vec<f64>, drift: Vec<f64>, vol: Vec<f64> },
}

/// One atom of the joint law of (ξⁱ, cⁱ).
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct IdioAtom {
    pub weight: f64,
    pub xi: Vec<f64>,
    pub c: Vec<f64>,
}

/// Finite-atom law of the idiosyncratic initial data.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct IdioLaw {
    pub atoms: Vec<IdioAtom>,
}

impl IdioLaw {
    pub fn point_mass(xi: Vec<f64>) -> Self {
        Self { atoms: vec![IdioAtom { weight: 1.0, xi, c: Vec::new() }] }
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let w = 1.0 / points.len() as f64;
        Self { atoms: points.into_iter().map(|xi| IdioAtom { weight: w, xi, c: Vec::new() }).collect() }
    }

    pub fn c_dim(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.c.len())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::Validation("idiosyncratic law has no atoms".into()));
        }
        let cd = self.c_dim();
        let mut total = 0.0;
        for (k, a) in self.atoms.iter().enumerate() {
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::Validation(format!("atom {k} has non-positive weight")));
            }
            if a.xi.len() != n {
                return Err(Error::Validation(format!("atom {k}: xi has length {}, expected {n}", a.xi.len())));
            }
            if a.c.len() != cd {
                return Err(Error::Validation(format!("atom {k}: c has length {}, expected {cd}", a.c.len())));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn mean_xi(&self) -> Vec<f64> {
        let n = self.atoms[0].xi.len();
        let mut m = vec![0.0; n];
        for a in &self.atoms {
            for (mi, x) in m.iter_mut().zip(&a.xi) {
                *mi += a.weight * x;
            }
        }
        m
    }
}

/// Default lattice settings shipped with a model.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct NoiseSpec {
    pub horizon: f64,
    pub steps: usize,
    pub branching: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { horizon: 1.0, steps: 4, branching: 2 }
    }
}

/// Full coefficient bundle of the market model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub dims: Dimensions,
    pub delta: f64,
    /// Λ(t, c⁰), symmetric positive definite.
    pub lambda: Coefficient,
    /// Λ⁰(t, c⁰), symmetric.
    pub lambda0: Coefficient,
    pub minor: MinorPopulation,
    pub major: MajorSpec,
    /// Normalized initial major position χ⁰.
    pub chi0: Vec<f64>,
    pub idio: IdioLaw,
    pub c0_law: C0Law,
    pub maturity: bool,
    pub noise: NoiseSpec,
}

impl ModelSpec {
    /// A scalar-friendly starting point: identity impacts, zero costs, ξ ≡ 0.
    pub fn zero(dims: Dimensions) -> Self {
        let n = dims.n;
        Self {
            dims,
            delta: 0.0,
            lambda: Coefficient::identity(n),
            lambda0: Coefficient::identity(n),
            minor: MinorPopulation::Homogeneous(MinorBundle::quadratic(&dims, Coefficient::zeros(n, n), Coefficient::zeros(n, n))),
            major: MajorSpec::quadratic(&dims, Coefficient::zeros(n, n), Coefficient::zeros(n, n)),
            chi0: vec![0.0; n],
            idio: IdioLaw::point_mass(vec![0.0; n]),
            c0_law: C0Law::Constant { value: vec![0.0; n] },
            maturity: false,
            noise: NoiseSpec::default(),
        }
    }

    pub fn with_agents(mut self, agents: usize) -> Self {
        self.dims.agents = agents;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let n = self.dims.n;
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Validation(format!("delta = {} is outside [0, 1)", self.delta)));
        }
        self.idio.validate(n)?;
        let cd = self.idio.c_dim();
        self.lambda.validate("lambda", n, n, n, 0)?;
        self.lambda0.validate("lambda0", n, n, n, 0)?;
        if !self.lambda.is_symmetric() || !self.lambda0.is_symmetric() {
            return Err(Error::Validation("lambda and lambda0 must be symmetric".into()));
        }
        match &self.minor {
            MinorPopulation::Homogeneous(b) => b.validate(&self.dims, cd, "minor")?,
            MinorPopulation::Heterogeneous(v) => {
                if v.len() != self.dims.agents {
                    return Err(Error::Validation(format!(
                        "{} minor bundles for {} agents",
                        v.len(),
                        self.dims.agents
                    )));
                }
                for (i, b) in v.iter().enumerate() {
                    b.validate(&self.dims, cd, &format!("minor[{i}]"))?;
                }
            }
        }
        self.major.l0.validate("major.l0", n, 1, n, 0)?;
        self.major.s0.validate("major.s0", n, self.dims.d0, n, 0)?;
        self.major.running.validate("major.running", n)?;
        self.major.terminal.validate("major.terminal", n)?;
        if self.chi0.len() != n {
            return Err(Error::Validation(format!("chi0 has length {}, expected {n}", self.chi0.len())));
        }
        match &self.c0_law {
            C0Law::Constant { value } => {
                if value.len() != n {
                    return Err(Error::Validation("c0 constant must have length n".into()));
                }
            }
            C0Law::Walk { initial, drift, vol } => {
                if initial.len() != n || drift.len() != n || vol.len() != n * self.dims.d0 {
                    return Err(Error::Validation("c0 walk must have initial/drift of length n and vol n x d0".into()));
                }
            }
        }
        if self.noise.steps == 0 || !(self.noise.horizon > 0.0) {
            return Err(Error::Validation("noise needs steps >= 1 and a positive horizon".into()));
        }
        if !matches!(self.noise.branching, 2 | 3) {
            return Err(Error::Validation("branching must be 2 or 3".into()));
        }
        Ok(())
    }

    /// Evaluation points (t, c⁰, cⁱ) used by the assumption checks: grid times
    /// crossed with c⁰ scenarios (±3 walk standard deviations) and every atom.
    pub fn default_sample_points(&self) -> Vec<SamplePoint> {
        let n = self.dims.n;
        let k = self.noise.steps;
        let horizon = self.noise.horizon;
        let mut points = Vec::new();
        for step in 0..=k {
            let t = horizon * step as f64 / k as f64;
            let c0s: Vec<Vec<f64>> = match &self.c0_law {
                C0Law::Constant { value } => vec![value.clone()],
                C0Law::Walk { initial, drift, vol } => {
                    let d0 = self.dims.d0;
                    let mean: Vec<f64> = (0..n).map(|j| initial[j] + drift[j] * t).collect();
                    let sd: Vec<f64> = (0..n).map(|j| (0..d0).map(|q| vol[j * d0 + q].powi(2)).sum::<f64>().sqrt() * t.sqrt()).collect();
                    [-3.0, 0.0, 3.0].iter().map(|s| mean.iter().zip(&sd).map(|(m, v)| m + s * v).collect()).collect()
                }
            };
            for c0 in c0s {
                for atom in &self.idio.atoms {
                    points.push(SamplePoint { t, c0: c0.clone(), ci: atom.c.clone() });
                }
            }
        }
        points
    }
}
