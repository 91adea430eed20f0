use crate::error::{Error, Result};

/// How a coefficient depends on its arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant,
    TimeDependent,
    Affine,
}

/// A matrix-valued coefficient
/// `base + t·time + Σⱼ c⁰ⱼ·common[j] + Σⱼ cⁱⱼ·idio[j]`, stored row-major.
///
/// Vectors are `rows × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficient {
    rows: usize,
    cols: usize,
    base: Vec<f64>,
    time: Option<Vec<f64>>,
    common: Vec<Vec<f64>>,
    idio: Vec<Vec<f64>>,
}

impl Coefficient {
    pub fn constant(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "coefficient data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, base: data, time: None, common: Vec::new(), idio: Vec::new() })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, base: vec![0.0; rows * cols], time: None, common: Vec::new(), idio: Vec::new() }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, base: vec![v], time: None, common: Vec::new(), idio: Vec::new() }
    }

    pub fn vector(v: Vec<f64>) -> Self {
        let rows = v.len();
        Self { rows, cols: 1, base: v, time: None, common: Vec::new(), idio: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut base = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            base[i * n + i] = *v;
        }
        Self { rows: n, cols: n, base, time: None, common: Vec::new(), idio: Vec::new() }
    }

    fn check_len(&self, what: &str, data: &[f64]) -> Result<()> {
        if data.len() != self.rows * self.cols {
            return Err(Error::Validation(format!(
                "{what} part has {} entries, expected {}x{}",
                data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    pub fn with_time(mut self, slope: Vec<f64>) -> Result<Self> {
        self.check_len("time", &slope)?;
        self.time = Some(slope);
        Ok(self)
    }

    /// One matrix per component of c⁰.
    pub fn with_common(mut self, parts: Vec<Vec<f64>>) -> Result<Self> {
        for p in &parts {
            self.check_len("common", p)?;
        }
        self.common = parts;
        Ok(self)
    }

    /// One matrix per component of cⁱ.
    pub fn with_idio(mut self, parts: Vec<Vec<f64>>) -> Result<Self> {
        for p in &parts {
            self.check_len("idiosyncratic", p)?;
        }
        self.idio = parts;
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn time_part(&self) -> Option<&[f64]> {
        self.time.as_deref()
    }

    pub fn common_parts(&self) -> &[Vec<f64>] {
        &self.common
    }

    pub fn idio_parts(&self) -> &[Vec<f64>] {
        &self.idio
    }

    pub fn depends_on_common(&self) -> bool {
        self.common.iter().any(|p| p.iter().any(|v| *v != 0.0))
    }

    pub fn depends_on_idio(&self) -> bool {
        self.idio.iter().any(|p| p.iter().any(|v| *v != 0.0))
    }

    pub fn kind(&self) -> CoefficientKind {
        if self.depends_on_common() || self.depends_on_idio() {
            CoefficientKind::Affine
        } else if self.time.as_ref().is_some_and(|t| t.iter().any(|v| *v != 0.0)) {
            CoefficientKind::TimeDependent
        } else {
            CoefficientKind::Constant
        }
    }

    pub fn is_zero(&self) -> bool {
        self.base.iter().all(|v| *v == 0.0)
            && self.time.as_ref().is_none_or(|t| t.iter().all(|v| *v == 0.0))
            && !self.depends_on_common()
            && !self.depends_on_idio()
    }

    /// Evaluate into `out` (length `rows·cols`). Missing trailing components of
    /// `c0`/`ci` are treated as zero.
    pub fn eval_into(&self, t: f64, c0: &[f64], ci: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.base);
        if let Some(slope) = &self.time {
            for (o, s) in out.iter_mut().zip(slope) {
                *o += t * s;
            }
        }
        for (part, w) in self.common.iter().zip(c0) {
            for (o, s) in out.iter_mut().zip(part) {
                *o += w * s;
            }
        }
        for (part, w) in self.idio.iter().zip(ci) {
            for (o, s) in out.iter_mut().zip(part) {
                *o += w * s;
            }
        }
    }

    pub fn eval(&self, t: f64, c0: &[f64], ci: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(t, c0, ci, &mut out);
        out
    }

    /// Shape and argument-count check; `name` identifies the coefficient in errors.
    pub fn validate(&self, name: &str, rows: usize, cols: usize, n_common: usize, n_idio: usize) -> Result<()> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(Error::Shape { name: name.into(), expected: (rows, cols), found: (self.rows, self.cols) });
        }
        if self.common.len() > n_common {
            return Err(Error::Validation(format!(
                "coefficient `{name}` has {} common loadings but c0 has {n_common} components",
                self.common.len()
            )));
        }
        if self.idio.len() > n_idio {
            return Err(Error::Validation(format!(
                "coefficient `{name}` has {} idiosyncratic loadings but ci has {n_idio} components",
                self.idio.len()
            )));
        }
        let finite = self.base.iter().chain(self.time.iter().flatten()).chain(self.common.iter().flatten()).chain(self.idio.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation(format!("coefficient `{name}` has non-finite entries")));
        }
        Ok(())
    }

    /// Whether every evaluation is symmetric (all parts symmetric).
    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let n = self.rows;
        let sym = |m: &[f64]| (0..n).all(|r| (0..n).all(|c| (m[r * n + c] - m[c * n + r]).abs() <= 1e-12 * (1.0 + m[r * n + c].abs())));
        sym(&self.base)
            && self.time.as_deref().is_none_or(sym)
            && self.common.iter().all(|m| sym(m))
            && self.idio.iter().all(|m| sym(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_evaluation() {
        let c = Coefficient::vector(vec![1.0, 2.0])
            .with_time(vec![1.0, 0.0])
            .unwrap()
            .with_common(vec![vec![0.0, 3.0]])
            .unwrap()
            .with_idio(vec![vec![1.0, 1.0]])
            .unwrap();
        assert_eq!(c.kind(), CoefficientKind::Affine);
        assert_eq!(c.eval(0.5, &[2.0], &[1.0]), vec![2.5, 9.0]);
    }

    #[test]
    fn kinds() {
        assert_eq!(Coefficient::scalar(1.0).kind(), CoefficientKind::Constant);
        let t = Coefficient::scalar(1.0).with_time(vec![2.0]).unwrap();
        assert_eq!(t.kind(), CoefficientKind::TimeDependent);
    }

    #[test]
    fn shape_error_names_coefficient() {
        let err = Coefficient::scalar(1.0).validate("cg", 2, 2, 0, 0).unwrap_err();
        assert!(err.to_string().contains("cg"));
    }
}
