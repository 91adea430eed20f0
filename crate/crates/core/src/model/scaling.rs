use super::ModelSpec;
use crate::error::{Error, Result};

/// Unnormalized major-agent coefficients for an N-agent market, expressed
/// through the normalized ones: `l₀ = N·𝔩₀`, `σ₀ = N·𝔰₀`,
/// `∂ₓf̄₀(t, x, c⁰) = ∂ₓ𝔣̄₀(t, x/N, c⁰)` and likewise for the terminal cost.
#[derive(Clone, Debug)]
pub struct ScaledMajor<'a> {
    spec: &'a ModelSpec,
    factor: f64,
}

pub fn scale_major(spec: &ModelSpec, agents: usize) -> Result<ScaledMajor<'_>> {
    if agents == 0 {
        return Err(Error::Validation("scaling needs N >= 1".into()));
    }
    Ok(ScaledMajor { spec, factor: agents as f64 })
}

impl ScaledMajor<'_> {
    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// Compose another scaling by `agents` on top of this one.
    pub fn rescale(&self, agents: usize) -> Result<Self> {
        if agents == 0 {
            return Err(Error::Validation("scaling needs N >= 1".into()));
        }
        Ok(ScaledMajor { spec: self.spec, factor: self.factor * agents as f64 })
    }

    pub fn l0(&self, t: f64, c0: &[f64]) -> Vec<f64> {
        self.spec.major.l0.eval(t, c0, &[]).into_iter().map(|v| v * self.factor).collect()
    }

    pub fn sigma0(&self, t: f64, c0: &[f64]) -> Vec<f64> {
        self.spec.major.s0.eval(t, c0, &[]).into_iter().map(|v| v * self.factor).collect()
    }

    pub fn dfdx(&self, t: f64, x: &[f64], c0: &[f64]) -> Vec<f64> {
        let xn: Vec<f64> = x.iter().map(|v| v / self.factor).collect();
        let mut out = vec![0.0; x.len()];
        self.spec.major.running.gradient(t, &xn, c0, &mut out);
        out
    }

    pub fn dgdx(&self, x: &[f64], c0: &[f64]) -> Vec<f64> {
        let xn: Vec<f64> = x.iter().map(|v| v / self.factor).collect();
        let mut out = vec![0.0; x.len()];
        self.spec.major.terminal.gradient(0.0, &xn, c0, &mut out);
        out
    }

    /// `f̄₀(t, x, c⁰) = N·𝔣̄₀(t, x/N, c⁰)`.
    pub fn f_bar(&self, t: f64, x: &[f64], c0: &[f64]) -> f64 {
        let xn: Vec<f64> = x.iter().map(|v| v / self.factor).collect();
        self.factor * self.spec.major.running.value(t, &xn, c0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, Dimensions, MajorSpec};

    fn spec() -> ModelSpec {
        let dims = Dimensions::new(1, 0, 0, 1).unwrap();
        let mut s = ModelSpec::zero(dims);
        s.major = MajorSpec::quadratic(&dims, Coefficient::scalar(1.0), Coefficient::scalar(1.0));
        s.major.l0 = Coefficient::vector(vec![3.0]);
        s
    }

    #[test]
    fn drift_scales_with_n() {
        let s = spec();
        assert_eq!(scale_major(&s, 5).unwrap().l0(0.0, &[0.0]), vec![15.0]);
    }

    #[test]
    fn derivative_identity() {
        let s = spec();
        assert_eq!(scale_major(&s, 4).unwrap().dfdx(0.0, &[8.0], &[0.0]), vec![2.0]);
        // N·d/dx 𝔣̄₀(x/N) equals the scaled derivative.
        let sc = scale_major(&s, 4).unwrap();
        let h = 1e-5;
        let fd = (sc.f_bar(0.0, &[8.0 + h], &[0.0]) - sc.f_bar(0.0, &[8.0 - h], &[0.0])) / (2.0 * h);
        assert!((fd - 2.0).abs() < 1e-8);
    }

    #[test]
    fn unit_scaling_is_identity() {
        let s = spec();
        let one = scale_major(&s, 1).unwrap();
        assert_eq!(one.l0(0.3, &[0.0]), s.major.l0.eval(0.3, &[0.0], &[]));
        assert_eq!(one.rescale(1).unwrap().factor(), one.factor());
        assert!(scale_major(&s, 0).is_err());
    }
}
