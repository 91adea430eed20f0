use super::*;
use crate::benchmarks::{closed_form_minor, lq_benchmark, maturity_fixture, round_robin_atoms, zero_model};
use crate::fbsde::{residual, FbsdeSystem};
use crate::model::{Coefficient, Dimensions, MinorPopulation};
use crate::scenario::{build_lattice, TimeGrid};

fn lattice_for(spec: &ModelSpec, steps: usize) -> NoiseLattice {
    build_lattice(TimeGrid::new(spec.noise.horizon, steps).unwrap(), &spec.dims, 2).unwrap()
}

#[test]
fn zero_model_is_zero() {
    let spec = zero_model(1, 3);
    let lat = lattice_for(&spec, 3);
    let eq = solve_full_equilibrium(&spec, &lat, &[0, 0, 0]).unwrap();
    assert_eq!(eq.price.max_abs(), 0.0);
    assert_eq!(eq.beta_hat.max_abs(), 0.0);
    assert_eq!(eq.solution.forward.max_abs(), 0.0);
    assert_eq!(eq.solution.backward.max_abs(), 0.0);
    assert_eq!(eq.clearing_residual, 0.0);
}

#[test]
fn optimal_beta_substitution() {
    let dims = Dimensions::new(1, 0, 0, 2).unwrap();
    let mut spec = ModelSpec::zero(dims);
    spec.lambda0 = Coefficient::scalar(2.0);
    let lat = lattice_for(&spec, 1);
    let m = Market::finite(&spec, &lat, &[0, 0]).unwrap();
    let mut b = [0.0];
    m.beta_rule(0, &[1.0], &[3.0], &[2.0], &mut b);
    assert_eq!(b[0] * 2.0, 2.0);
}

#[test]
fn price_and_alpha_substitution() {
    let dims = Dimensions::new(1, 0, 0, 2).unwrap();
    let mut spec = ModelSpec::zero(dims);
    let lat = lattice_for(&spec, 1);
    let m = Market::finite(&spec, &lat, &[0, 0]).unwrap();
    let mut my = [0.0];
    m.mean(&[1.0, 3.0], &mut my);
    let mut phi = [0.0];
    m.price_rule(0, &my, &[4.0 / 2.0], &mut phi);
    assert_eq!(phi[0], 0.0);
    let mut a = [0.0];
    m.alpha_rule(0, &[1.0], &[1.0], &mut a);
    assert_eq!(a[0], -2.0);
    spec.lambda = Coefficient::scalar(2.0);
    let m = Market::finite(&spec, &lat, &[0, 0]).unwrap();
    m.alpha_rule(0, &[1.0], &[1.0], &mut a);
    assert_eq!(a[0], -1.0);
}

#[test]
fn clearing_terminal_mean_term() {
    let dims = Dimensions::new(1, 0, 0, 2).unwrap();
    let mut spec = ModelSpec::zero(dims);
    spec.delta = 0.5;
    spec.minor = MinorPopulation::Homogeneous(crate::model::MinorBundle::quadratic(&dims, Coefficient::scalar(1.0), Coefficient::scalar(1.0)));
    let lat = lattice_for(&spec, 1);
    let m = Market::finite(&spec, &lat, &[0, 0]).unwrap();
    let flow = NodeField::zeros(lat.len(), 1);
    let sys = ClearingSystem::new(&m, &flow);
    let mut out = [0.0; 2];
    sys.terminal(1, &[1.0, 3.0], &mut out);
    assert_eq!(out, [3.0, 5.0]);
}

#[test]
fn noiseless_price_at_zero() {
    let spec = closed_form_minor(64);
    let lat = lattice_for(&spec, 64);
    let eq = solve_minor_clearing(&spec, &lat, &NodeField::zeros(lat.len(), 1), &[0]).unwrap();
    assert!((eq.price.get(0)[0] + 2.0).abs() <= 2e-2);
    assert!((eq.y[0].get(0)[0] - 2.0).abs() <= 2e-2);
}

#[test]
fn benchmark_clears_and_picard_agrees() {
    for n in [1, 2] {
        let spec = lq_benchmark(n, 3);
        let lat = lattice_for(&spec, 4);
        let atoms = round_robin_atoms(&spec, 3);
        let direct = solve_full_equilibrium(&spec, &lat, &atoms).unwrap();
        assert!(direct.clearing_residual <= 1e-10, "{}", direct.clearing_residual);
        assert!(direct.diagnostics().max_equation_residual <= 1e-10);
        assert!(direct.solution.martingale_defect(&lat) <= 1e-12);
        let picard = solve_full_equilibrium_with(&spec, &lat, &atoms, SolverChoice::Picard(PicardOptions { tol: 1e-12, ..Default::default() })).unwrap();
        let d = direct.solution.forward.max_abs_diff(&picard.solution.forward).max(direct.solution.backward.max_abs_diff(&picard.solution.backward));
        assert!(d <= 1e-8, "n={n}: {d} after {} iterations", picard.diagnostics().iterations);
    }
}

#[test]
fn perturbed_price_breaks_clearing_by_n_lambda_inv() {
    let spec = lq_benchmark(1, 4);
    let lat = lattice_for(&spec, 3);
    let mut eq = solve_full_equilibrium(&spec, &lat, &round_robin_atoms(&spec, 4)).unwrap();
    let node = 2;
    eq.price.get_mut(node)[0] += 1.0;
    let lam_inv = eq.lambda_inv.get(node)[0];
    let r = clearing_residual(&eq, &lat);
    assert!((r - 4.0 * lam_inv).abs() < 1e-9, "{r}");
}

#[test]
fn homogeneous_symmetry_and_permutation() {
    let spec = lq_benchmark(1, 4);
    let lat = lattice_for(&spec, 3);
    let same = solve_full_equilibrium(&spec, &lat, &[1, 1, 1, 1]).unwrap();
    for i in 1..4 {
        assert!(same.y[0].max_abs_diff(&same.y[i]) <= 1e-12);
        assert!(same.x[0].max_abs_diff(&same.x[i]) <= 1e-12);
    }
    let a = solve_full_equilibrium(&spec, &lat, &[0, 1, 1, 0]).unwrap();
    let b = solve_full_equilibrium(&spec, &lat, &[1, 0, 0, 1]).unwrap();
    assert!(a.price.max_abs_diff(&b.price) <= 1e-12);
    assert!(a.beta_hat.max_abs_diff(&b.beta_hat) <= 1e-12);
    assert!(a.y[0].max_abs_diff(&b.y[1]) <= 1e-12);
    assert!(a.p[3].max_abs_diff(&b.p[2]) <= 1e-12);
}

#[test]
fn price_taker_consistency() {
    let spec = lq_benchmark(2, 3);
    let lat = lattice_for(&spec, 3);
    let atoms = round_robin_atoms(&spec, 3);
    let flow = NodeField::from_fn(&lat, 2, |v, out| {
        if !lat.is_terminal(v) {
            out.copy_from_slice(&[0.3 * lat.t(v), -0.2]);
        }
    });
    let eq = solve_minor_clearing(&spec, &lat, &flow, &atoms).unwrap();
    assert!(eq.clearing_residual <= 1e-10);
    let br = minor_best_response(&spec, &lat, &eq.price, &atoms).unwrap();
    for (i, r) in br.iter().enumerate() {
        assert!(r.y.max_abs_diff(&eq.y[i]) <= 1e-10);
        assert!(r.alpha.max_abs_diff(&eq.alpha_hat[i]) <= 1e-10);
    }
}

#[test]
fn maturity_terminal_values() {
    for walk in [false, true] {
        let spec = maturity_fixture(1, 2, walk);
        let lat = lattice_for(&spec, 3);
        let ex = crate::scenario::evaluate_exogenous(&lat, &spec).unwrap();
        let eq = solve_full_equilibrium(&spec, &lat, &[0, 1]).unwrap();
        for v in lat.terminal_nodes() {
            let c = ex.c0.get(v)[0];
            assert!((eq.price.get(v)[0] - c).abs() <= 1e-12);
            assert!((eq.p0.as_ref().unwrap().get(v)[0] + c).abs() <= 1e-12);
            assert!((eq.y[1].get(v)[0] + c).abs() <= 1e-12);
            assert!(eq.p[0].get(v)[0].abs() <= 1e-12);
        }
    }
}

#[test]
fn residual_detects_tampering() {
    let spec = zero_model(1, 1);
    let lat = lattice_for(&spec, 2);
    let m = Market::finite(&spec, &lat, &[0]).unwrap();
    let sys = FullSystem::new(&m);
    let mut sol = crate::fbsde::solve_direct(&sys, &lat).unwrap();
    assert_eq!(residual(&sys, &lat, &sol).max_equation_residual, 0.0);
    sol.backward.get_mut(3)[1] += 1.0;
    assert!(residual(&sys, &lat, &sol).max_equation_residual >= 0.5);
}

#[test]
fn idiosyncratic_brownian_is_rejected() {
    let mut spec = lq_benchmark(1, 2);
    spec.dims.d = 1;
    if let MinorPopulation::Homogeneous(b) = &mut spec.minor {
        b.sigma = Coefficient::constant(1, 1, vec![0.1]).unwrap();
    }
    let lat = lattice_for(&spec, 2);
    assert!(matches!(solve_full_equilibrium(&spec, &lat, &[0, 1]), Err(Error::Unsupported(_))));
}
