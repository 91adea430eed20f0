use super::{NodeField, NoiseLattice};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{C0Law, ModelSpec};

/// Common-noise exogenous fields evaluated node by node. Matrices are stored
/// row-major, `n²` values per node.
#[derive(Clone, Debug)]
pub struct Exogenous {
    pub n: usize,
    pub c0: NodeField,
    pub lambda: NodeField,
    /// Λ̄ = Λ⁻¹.
    pub lambda_inv: NodeField,
    pub lambda0: NodeField,
    /// V̄⁰ = (Λ⁰ + 2Λ)⁻¹.
    pub vbar0: NodeField,
}

pub fn evaluate_exogenous(lattice: &NoiseLattice, spec: &ModelSpec) -> Result<Exogenous> {
    let n = spec.dims.n;
    if lattice.d0() != spec.dims.d0 {
        return Err(Error::Validation(format!(
            "lattice has {} common factors, model has d0 = {}",
            lattice.d0(),
            spec.dims.d0
        )));
    }
    let nodes = lattice.len();
    let mut c0 = NodeField::zeros(nodes, n);
    match &spec.c0_law {
        C0Law::Constant { value } => {
            for v in 0..nodes {
                c0.get_mut(v).copy_from_slice(value);
            }
        }
        C0Law::Walk { initial, drift, vol } => {
            let dt = lattice.dt();
            let d0 = lattice.d0();
            c0.get_mut(0).copy_from_slice(initial);
            for v in 1..nodes {
                let p = lattice.parent(v).expect("non-root node has a parent");
                let dw = lattice.increment(v);
                let mut next = c0.get(p).to_vec();
                for j in 0..n {
                    next[j] += drift[j] * dt;
                    for q in 0..d0 {
                        next[j] += vol[j * d0 + q] * dw[q];
                    }
                }
                c0.get_mut(v).copy_from_slice(&next);
            }
        }
    }
    let mut lambda = NodeField::zeros(nodes, n * n);
    let mut lambda_inv = NodeField::zeros(nodes, n * n);
    let mut lambda0 = NodeField::zeros(nodes, n * n);
    let mut vbar0 = NodeField::zeros(nodes, n * n);
    for v in 0..nodes {
        let t = lattice.t(v);
        let cv = c0.get(v).to_vec();
        spec.lambda.eval_into(t, &cv, &[], lambda.get_mut(v));
        spec.lambda0.eval_into(t, &cv, &[], lambda0.get_mut(v));
        let (lo, _) = linalg::sym_eigen_bounds(n, lambda.get(v));
        if !(lo > 0.0) {
            return Err(Error::Assumption(format!(
                "Lambda is not positive definite at node {v} (t={t}, c0={cv:?}, min eigenvalue {lo})"
            )));
        }
        let inv = linalg::invert(n, lambda.get(v))
            .ok_or_else(|| Error::Assumption(format!("Lambda is singular at node {v}")))?;
        lambda_inv.get_mut(v).copy_from_slice(&inv);
        let m: Vec<f64> = lambda0.get(v).iter().zip(lambda.get(v)).map(|(a, b)| a + 2.0 * b).collect();
        let inv = linalg::invert(n, &m).ok_or_else(|| {
            Error::Assumption(format!("Lambda0 + 2 Lambda is singular at node {v} (t={t}, c0={cv:?})"))
        })?;
        vbar0.get_mut(v).copy_from_slice(&inv);
    }
    Ok(Exogenous { n, c0, lambda, lambda_inv, lambda0, vbar0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, Dimensions};
    use crate::scenario::{build_lattice, TimeGrid};

    #[test]
    fn constant_c0_and_identity_lambda() {
        let dims = Dimensions::new(1, 1, 0, 1).unwrap();
        let mut spec = ModelSpec::zero(dims);
        spec.c0_law = C0Law::Constant { value: vec![2.0] };
        let lat = build_lattice(TimeGrid::new(1.0, 3).unwrap(), &dims, 2).unwrap();
        let ex = evaluate_exogenous(&lat, &spec).unwrap();
        assert!(ex.c0.as_slice().iter().all(|v| *v == 2.0));
        assert!(ex.lambda_inv.as_slice().iter().all(|v| *v == 1.0));
        assert!(ex.vbar0.as_slice().iter().all(|v| (*v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn drift_only_walk() {
        let dims = Dimensions::new(1, 1, 0, 1).unwrap();
        let mut spec = ModelSpec::zero(dims);
        spec.c0_law = C0Law::Walk { initial: vec![0.5], drift: vec![1.0], vol: vec![0.0] };
        let lat = build_lattice(TimeGrid::new(1.0, 2).unwrap(), &dims, 2).unwrap();
        let ex = evaluate_exogenous(&lat, &spec).unwrap();
        for v in lat.terminal_nodes() {
            assert_eq!(ex.c0.get(v), &[1.5]);
        }
    }

    #[test]
    fn singular_major_impact_is_rejected() {
        let dims = Dimensions::new(1, 0, 0, 1).unwrap();
        let mut spec = ModelSpec::zero(dims);
        spec.lambda0 = Coefficient::scalar(-2.0);
        let lat = build_lattice(TimeGrid::new(1.0, 2).unwrap(), &dims, 2).unwrap();
        assert!(matches!(evaluate_exogenous(&lat, &spec), Err(Error::Assumption(_))));
    }
}
