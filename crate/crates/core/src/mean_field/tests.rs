use super::*;
use crate::benchmarks::{lq_benchmark, maturity_fixture, point_mass_scalar, zero_model};
use crate::finite_market::solve_full_equilibrium;
use crate::model::IdioLaw;
use crate::scenario::{build_lattice, TimeGrid};

fn lattice_for(spec: &ModelSpec, steps: usize) -> NoiseLattice {
    build_lattice(TimeGrid::new(spec.noise.horizon, steps).unwrap(), &spec.dims, 2).unwrap()
}

#[test]
fn zero_model_is_zero() {
    let spec = zero_model(2, 1);
    let lat = lattice_for(&spec, 3);
    let s = solve_mfg(&spec, &lat).unwrap();
    assert_eq!(s.price.max_abs(), 0.0);
    assert_eq!(s.beta_hat.max_abs(), 0.0);
}

#[test]
fn reduced_block_count() {
    let spec = lq_benchmark(2, 1);
    let lat = lattice_for(&spec, 2);
    let m = reduce_conditional_means(&spec, &lat).unwrap();
    assert_eq!(m.forward_dim() + m.backward_dim(), 6 * 2);
}

#[test]
fn delta_zero_terminal_has_no_amplification() {
    let mut spec = lq_benchmark(1, 1);
    spec.delta = 0.0;
    let lat = lattice_for(&spec, 1);
    let m = reduce_conditional_means(&spec, &lat).unwrap();
    let mut out = [0.0; 3];
    m.terminal(1, &[0.0, 2.0, 0.0], &mut out);
    // c^g = 1, h^g = 0.05
    assert!((out[1] - 2.05).abs() < 1e-15);
}

#[test]
fn point_mass_matches_single_agent_market() {
    let spec = point_mass_scalar(1);
    let lat = lattice_for(&spec, 3);
    let mfg = solve_mfg(&spec, &lat).unwrap();
    let one = solve_full_equilibrium(&spec, &lat, &[0]).unwrap();
    assert!(mfg.price.max_abs_diff(&one.price) <= 1e-12);
    assert!(mfg.beta_hat.max_abs_diff(&one.beta_hat) <= 1e-12);
    assert!(mfg.dx[0].max_abs() <= 1e-14);
}

#[test]
fn atom_weighted_market_is_an_exact_oracle() {
    let spec = lq_benchmark(2, 2);
    let lat = lattice_for(&spec, 3);
    let mfg = solve_mfg(&spec, &lat).unwrap();
    let market = crate::finite_market::Market::atom_weighted(&spec, &lat).unwrap();
    let eq = crate::finite_market::solve_market(&market, SolverChoice::Auto).unwrap();
    assert!(mfg.price.max_abs_diff(&eq.price) <= 1e-10);
    for a in 0..mfg.atoms() {
        assert!(mfg.atom_y(a).max_abs_diff(&eq.y[a]) <= 1e-10);
        assert!(mfg.atom_r(a).max_abs_diff(&eq.r[a]) <= 1e-10);
    }
    assert!(mfg.deviation_mean_defect() <= 1e-12);
}

#[test]
fn substitution_example() {
    // β̂ = V̄⁰(−p⁰ + ȳ + p̄) = ¼·4 = 1 and φ = −2 + 1 = −1.
    let mut spec = zero_model(1, 1);
    spec.lambda0 = crate::model::Coefficient::scalar(2.0);
    let lat = lattice_for(&spec, 1);
    let m = reduce_conditional_means(&spec, &lat).unwrap();
    let mut b = [0.0];
    m.control(0, &[0.0, 2.0, 2.0], &mut b);
    assert_eq!(b[0], 1.0);
    assert_eq!(-2.0 + m.exo.lambda.get(0)[0] * b[0], -1.0);
}

#[test]
fn maturity_pins_terminal_price() {
    for walk in [false, true] {
        let spec = maturity_fixture(1, 1, walk);
        let lat = lattice_for(&spec, 3);
        let s = solve_mfg(&spec, &lat).unwrap();
        let ex = evaluate_exogenous(&lat, &spec).unwrap();
        for v in lat.terminal_nodes() {
            assert!((s.price.get(v)[0] - ex.c0.get(v)[0]).abs() <= 1e-12);
        }
        let mut other = spec.clone();
        other.delta = 0.7;
        let s2 = solve_mfg(&other, &lat).unwrap();
        assert!(s.price.max_abs_diff(&s2.price) == 0.0);
    }
}

#[test]
fn idio_dependent_curvature_is_rejected() {
    let mut spec = lq_benchmark(1, 1);
    if let crate::model::MinorPopulation::Homogeneous(b) = &mut spec.minor {
        b.cf = b.cf.clone().with_idio(vec![vec![0.1]]).unwrap();
    }
    spec.idio = IdioLaw { atoms: spec.idio.atoms.clone() };
    let lat = lattice_for(&spec, 2);
    assert!(matches!(solve_mfg(&spec, &lat), Err(Error::Unsupported(_))));
}
