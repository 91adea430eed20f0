//! TOML / JSON model files. Matrices are nested row-major arrays, vectors are
//! flat arrays; either may be replaced by a table with `base`, `time`,
//! `common` and `idio` parts.

use std::path::Path;

use serde::Deserialize;

use super::{
    C0Law, Coefficient, Dimensions, IdioAtom, IdioLaw, MajorCost, MajorSpec, MinorBundle, MinorPopulation,
    ModelSpec, NoiseSpec,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFormat {
    Toml,
    Json,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    dimensions: DimsFile,
    constants: ConstantsFile,
    minor: BundleFile,
    #[serde(default)]
    minor_agents: Vec<BundleFile>,
    major: MajorFile,
    noise: NoiseFile,
    laws: LawsFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsFile {
    n: usize,
    #[serde(default)]
    d0: usize,
    #[serde(default)]
    d: usize,
    agents: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    #[serde(default)]
    delta: f64,
    lambda: MatFile,
    lambda0: MatFile,
    chi0: Vec<f64>,
    #[serde(default)]
    maturity: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatFile {
    Plain(Vec<Vec<f64>>),
    Full(FullMat),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullMat {
    base: Vec<Vec<f64>>,
    #[serde(default)]
    time: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    common: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    idio: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VecFile {
    Plain(Vec<f64>),
    Full(FullVec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullVec {
    base: Vec<f64>,
    #[serde(default)]
    time: Option<Vec<f64>>,
    #[serde(default)]
    common: Vec<Vec<f64>>,
    #[serde(default)]
    idio: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    #[serde(default)]
    l: Option<VecFile>,
    #[serde(default)]
    sigma0: Option<MatFile>,
    #[serde(default)]
    sigma: Option<MatFile>,
    cf: MatFile,
    #[serde(default)]
    hf: Option<VecFile>,
    cg: MatFile,
    #[serde(default)]
    hg: Option<VecFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadFile {
    curvature: MatFile,
    #[serde(default)]
    linear: Option<VecFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MajorFile {
    #[serde(default)]
    l0: Option<VecFile>,
    #[serde(default)]
    s0: Option<MatFile>,
    running: QuadFile,
    terminal: QuadFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    horizon: f64,
    steps: usize,
    #[serde(default = "default_branching")]
    branching: usize,
}

fn default_branching() -> usize {
    2
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LawsFile {
    c0: C0File,
    atoms: Vec<AtomFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum C0File {
    Constant { value: Vec<f64> },
    Walk { initial: Vec<f64>, drift: Vec<f64>, vol: Vec<Vec<f64>> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomFile {
    weight: f64,
    xi: Vec<f64>,
    #[serde(default)]
    c: Vec<f64>,
}

fn flatten(name: &str, rows: &[Vec<f64>], cols_hint: usize) -> Result<(usize, usize, Vec<f64>)> {
    let r = rows.len();
    let c = rows.first().map_or(cols_hint, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Validation(format!("matrix `{name}` has ragged rows")));
    }
    Ok((r, c, rows.iter().flatten().copied().collect()))
}

impl MatFile {
    fn into_coefficient(self, name: &str, cols_hint: usize) -> Result<Coefficient> {
        let named = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("`{name}`: {m}")),
            other => other,
        };
        match self {
            MatFile::Plain(rows) => {
                let (r, c, data) = flatten(name, &rows, cols_hint)?;
                Coefficient::constant(r, c, data).map_err(named)
            }
            MatFile::Full(full) => {
                let (r, c, data) = flatten(name, &full.base, cols_hint)?;
                let mut coef = Coefficient::constant(r, c, data).map_err(named)?;
                if let Some(t) = full.time {
                    coef = coef.with_time(flatten(name, &t, c)?.2).map_err(named)?;
                }
                let common = full.common.iter().map(|m| flatten(name, m, c).map(|f| f.2)).collect::<Result<Vec<_>>>()?;
                let idio = full.idio.iter().map(|m| flatten(name, m, c).map(|f| f.2)).collect::<Result<Vec<_>>>()?;
                coef.with_common(common).and_then(|c| c.with_idio(idio)).map_err(named)
            }
        }
    }
}

impl VecFile {
    fn into_coefficient(self, name: &str) -> Result<Coefficient> {
        let named = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("`{name}`: {m}")),
            other => other,
        };
        match self {
            VecFile::Plain(v) => Ok(Coefficient::vector(v)),
            VecFile::Full(full) => {
                let mut coef = Coefficient::vector(full.base);
                if let Some(t) = full.time {
                    coef = coef.with_time(t).map_err(named)?;
                }
                coef.with_common(full.common).and_then(|c| c.with_idio(full.idio)).map_err(named)
            }
        }
    }
}

fn opt_vec(v: Option<VecFile>, name: &str, n: usize) -> Result<Coefficient> {
    v.map_or_else(|| Ok(Coefficient::zeros(n, 1)), |v| v.into_coefficient(name))
}

fn opt_mat(m: Option<MatFile>, name: &str, rows: usize, cols: usize) -> Result<Coefficient> {
    m.map_or_else(|| Ok(Coefficient::zeros(rows, cols)), |m| m.into_coefficient(name, cols))
}

impl BundleFile {
    fn into_bundle(self, label: &str, dims: &Dimensions) -> Result<MinorBundle> {
        let n = dims.n;
        Ok(MinorBundle {
            l: opt_vec(self.l, &format!("{label}.l"), n)?,
            sigma0: opt_mat(self.sigma0, &format!("{label}.sigma0"), n, dims.d0)?,
            sigma: opt_mat(self.sigma, &format!("{label}.sigma"), n, dims.d)?,
            cf: self.cf.into_coefficient(&format!("{label}.cf"), n)?,
            hf: opt_vec(self.hf, &format!("{label}.hf"), n)?,
            cg: self.cg.into_coefficient(&format!("{label}.cg"), n)?,
            hg: opt_vec(self.hg, &format!("{label}.hg"), n)?,
        })
    }
}

impl QuadFile {
    fn into_cost(self, label: &str, n: usize) -> Result<MajorCost> {
        Ok(MajorCost::quadratic(
            self.curvature.into_coefficient(&format!("{label}.curvature"), n)?,
            opt_vec(self.linear, &format!("{label}.linear"), n)?,
        ))
    }
}

impl ModelFile {
    fn into_spec(self) -> Result<ModelSpec> {
        let dims = Dimensions::new(self.dimensions.n, self.dimensions.d0, self.dimensions.d, self.dimensions.agents)?;
        let n = dims.n;
        let minor = if self.minor_agents.is_empty() {
            MinorPopulation::Homogeneous(self.minor.into_bundle("minor", &dims)?)
        } else {
            MinorPopulation::Heterogeneous(
                self.minor_agents
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| b.into_bundle(&format!("minor_agents[{i}]"), &dims))
                    .collect::<Result<_>>()?,
            )
        };
        let major = MajorSpec {
            l0: opt_vec(self.major.l0, "major.l0", n)?,
            s0: opt_mat(self.major.s0, "major.s0", n, dims.d0)?,
            running: self.major.running.into_cost("major.running", n)?,
            terminal: self.major.terminal.into_cost("major.terminal", n)?,
        };
        let c0_law = match self.laws.c0 {
            C0File::Constant { value } => C0Law::Constant { value },
            C0File::Walk { initial, drift, vol } => {
                let (_, _, vol) = flatten("laws.c0.vol", &vol, dims.d0)?;
                C0Law::Walk { initial, drift, vol }
            }
        };
        let idio = IdioLaw {
            atoms: self.laws.atoms.into_iter().map(|a| IdioAtom { weight: a.weight, xi: a.xi, c: a.c }).collect(),
        };
        let spec = ModelSpec {
            dims,
            delta: self.constants.delta,
            lambda: self.constants.lambda.into_coefficient("constants.lambda", n)?,
            lambda0: self.constants.lambda0.into_coefficient("constants.lambda0", n)?,
            minor,
            major,
            chi0: self.constants.chi0,
            idio,
            c0_law,
            maturity: self.constants.maturity,
            noise: NoiseSpec { horizon: self.noise.horizon, steps: self.noise.steps, branching: self.noise.branching },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parse a model document. JSON is detected by a leading `{`.
pub fn parse_model(text: &str, format: Option<ModelFormat>) -> Result<ModelSpec> {
    let format = format.unwrap_or_else(|| {
        if text.trim_start().starts_with('{') {
            ModelFormat::Json
        } else {
            ModelFormat::Toml
        }
    });
    let file: ModelFile = match format {
        ModelFormat::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        ModelFormat::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
    };
    file.into_spec()
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Some(ModelFormat::Json),
        Some("toml") => Some(ModelFormat::Toml),
        _ => None,
    };
    parse_model(&text, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
[dimensions]
n = 1
d0 = 1
agents = 2

[constants]
delta = 0.25
lambda = [[1.0]]
lambda0 = { base = [[2.0]], time = [[0.5]] }
chi0 = [0.5]

[minor]
cf = [[1.0]]
cg = [[1.0]]
sigma0 = [[0.3]]
l = { base = [0.0], common = [[0.1]], idio = [[1.0]] }

[major]
running = { curvature = [[1.0]] }
terminal = { curvature = [[2.0]], linear = [0.1] }

[noise]
horizon = 1.0
steps = 3

[laws]
c0 = { kind = "walk", initial = [1.0], drift = [0.0], vol = [[0.2]] }

[[laws.atoms]]
weight = 0.5
xi = [0.0]
c = [1.0]

[[laws.atoms]]
weight = 0.5
xi = [1.0]
c = [-1.0]
"#;

    #[test]
    fn parses_toml() {
        let spec = parse_model(SCALAR, None).unwrap();
        assert_eq!(spec.dims.agents, 2);
        assert_eq!(spec.lambda0.eval(1.0, &[0.0], &[]), vec![2.5]);
        assert_eq!(spec.minor.bundle(0).l.eval(0.0, &[2.0], &[1.0]), vec![1.2]);
        assert_eq!(spec.noise.branching, 2);
        assert!(matches!(spec.c0_law, C0Law::Walk { .. }));
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SCALAR.replace("delta = 0.25", "delta = 0.25\ngamma = 1.0");
        assert!(matches!(parse_model(&bad, None), Err(Error::Parse(_))));
    }

    #[test]
    fn json_is_accepted() {
        let value: toml::Value = toml::from_str(SCALAR).unwrap();
        let json = serde_json::to_string(&value).unwrap();
        let a = parse_model(&json, None).unwrap();
        let b = parse_model(SCALAR, None).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.minor, b.minor);
        assert_eq!(a.idio, b.idio);
    }

    #[test]
    fn shape_errors_name_the_coefficient() {
        let bad = SCALAR.replace("cg = [[1.0]]", "cg = [[1.0, 0.0]]");
        let err = parse_model(&bad, None).unwrap_err();
        assert!(err.to_string().contains("minor.cg"), "{err}");
    }
}
