use super::*;
use crate::benchmarks::{closed_form_minor, lq_benchmark, maturity_fixture, round_robin_atoms, zero_model};
use crate::finite_market::solve_full_equilibrium;
use crate::model::Coefficient;
use crate::scenario::{build_lattice, NodeField, NoiseLattice, TimeGrid};

fn lattice_for(spec: &crate::model::ModelSpec) -> NoiseLattice {
    build_lattice(TimeGrid::new(spec.noise.horizon, spec.noise.steps).unwrap(), &spec.dims, spec.noise.branching).unwrap()
}

#[test]
fn zero_model_costs_vanish() {
    let spec = zero_model(1, 2);
    let lat = lattice_for(&spec);
    let z = NodeField::zeros(lat.len(), 1);
    assert_eq!(cost_minor(&spec, &lat, &z, &z, 0, 0).unwrap(), 0.0);
    assert_eq!(cost_major(&spec, &lat, &z, &[0, 0]).unwrap(), 0.0);
}

#[test]
fn unit_control_costs_half() {
    let mut spec = zero_model(1, 1);
    spec.noise.horizon = 1.0;
    let lat = lattice_for(&spec);
    let z = NodeField::zeros(lat.len(), 1);
    let one = NodeField::constant(&lat, &[1.0]);
    assert!((cost_minor(&spec, &lat, &z, &one, 0, 0).unwrap() - 0.5).abs() < 1e-14);
}

#[test]
fn minor_optimum_beats_perturbations_noiseless() {
    let spec = closed_form_minor(16);
    let lat = lattice_for(&spec);
    let eq = solve_full_equilibrium(&spec, &lat, &[0]).unwrap();
    let j0 = cost_minor(&spec, &lat, &eq.price, &eq.alpha_hat[0], 0, 0).unwrap();
    for d in 0..10 {
        let eta = random_direction(&lat, 1, d);
        let a: Vec<f64> = eq.alpha_hat[0].as_slice().iter().zip(eta.as_slice()).map(|(a, e)| a + 0.1 * e).collect();
        let a = NodeField::from_vec(1, a).unwrap();
        assert!(cost_minor(&spec, &lat, &eq.price, &a, 0, 0).unwrap() > j0);
    }
}

#[test]
fn unit_flow_cost_matches_hand_assembly() {
    // f̄₀ = g₀ = 0, Λ⁰ = 2, b ≡ 1: J = E Σ Δt (φ + 1).
    let mut spec = closed_form_minor(8);
    spec.major = crate::model::MajorSpec::quadratic(&spec.dims, Coefficient::scalar(0.0), Coefficient::scalar(0.0));
    let lat = lattice_for(&spec);
    let flow = NodeField::from_fn(&lat, 1, |v, o| o[0] = if lat.is_terminal(v) { 0.0 } else { 1.0 });
    let sol = crate::finite_market::solve_minor_clearing(&spec, &lat, &flow, &[0]).unwrap();
    let hand: f64 = lat.non_terminal().map(|v| lat.probability(v) * lat.dt() * (sol.price.get(v)[0] + 1.0)).sum();
    assert!((cost_major(&spec, &lat, &flow, &[0]).unwrap() - hand).abs() < 1e-12);
}

#[test]
fn equilibrium_cost_consistent_between_paths() {
    let spec = lq_benchmark(2, 3);
    let lat = lattice_for(&spec);
    let atoms = round_robin_atoms(&spec, 3);
    let eq = solve_full_equilibrium(&spec, &lat, &atoms).unwrap();
    let along = major_cost_along(&spec, &lat, &eq.beta_hat, &eq.price).unwrap();
    let resolved = cost_major(&spec, &lat, &eq.beta_hat, &atoms).unwrap();
    assert!((along - resolved).abs() < 1e-8);
}

fn quick() -> PerturbationOptions {
    PerturbationOptions { directions: 4, ..Default::default() }
}

#[test]
fn perturbations_at_every_level() {
    for spec in [lq_benchmark(1, 2), lq_benchmark(2, 2), maturity_fixture(1, 2, true)] {
        let lat = lattice_for(&spec);
        let atoms = round_robin_atoms(&spec, 2);
        for level in [Level::Minor, Level::MajorN, Level::MajorMfg] {
            let rep = perturbation_test(&spec, &lat, level, &atoms, &quick()).unwrap();
            assert!(rep.failed.is_empty());
            let zero = rep.eps_grid.iter().position(|e| *e == 0.0).unwrap();
            assert!(rep.delta_j.iter().all(|row| row[zero] == 0.0));
            assert!(rep.min_delta_j >= -1e-9, "{level:?} {}", rep.min_delta_j);
            assert!(rep.gradient_norm <= 1e-6, "{level:?} {}", rep.gradient_norm);
            for row in &rep.delta_j {
                for (e, v) in rep.eps_grid.iter().zip(row) {
                    let mirror = rep.eps_grid.iter().position(|x| *x == -e).unwrap();
                    assert!((v - row[mirror]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn hamiltonian_minimizers() {
    let spec = lq_benchmark(1, 2);
    let c0 = [0.3];
    // Minor parabola with Λ = 1, y = φ = 1.
    let mut unit = zero_model(1, 1);
    unit.lambda = Coefficient::scalar(1.0);
    let a = minor_minimizer(&unit, 0.0, &[0.0], &[1.0], &[1.0]).unwrap();
    assert_eq!(a, vec![-2.0]);
    let h = |x: f64| minor_hamiltonian(&unit, 0, 0.0, &[0.0], &[0.0], &[0.0], &[1.0], &[x], &[1.0]);
    let grid_min = (0..=400).map(|k| h(-4.0 + 0.01 * k as f64)).fold(f64::INFINITY, f64::min);
    assert!((h(-2.0) - grid_min).abs() < 1e-12);

    let ci = vec![vec![0.5], vec![-1.0]];
    let x = vec![vec![0.2], vec![-0.4]];
    let y = vec![vec![0.7], vec![1.1]];
    let p = vec![vec![-0.3], vec![0.25]];
    let r = vec![vec![0.1], vec![0.9]];
    let pt = NAgentPoint { t: 0.25, c0: &c0, ci: &ci, x0: &[0.6], x: &x, y: &y, p0: &[0.4], p: &p, r: &r };
    let b = major_minimizer(&spec, &pt).unwrap();
    let hb = major_hamiltonian(&spec, &pt, &b).unwrap();
    for k in 0..100 {
        let v = b[0] + ((k as f64) * 0.37).sin();
        assert!(hb <= major_hamiltonian(&spec, &pt, &[v]).unwrap() + 1e-12);
    }
    let m = MfgPoint {
        t: 0.25, c0: &c0, c1: &[0.5], x0: &[0.6], x1: &[0.2], y1: &[0.7], ybar: &[0.9], p0: &[0.4], p1: &[-0.3], pbar: &[0.1], r1: &[0.2],
    };
    let bm = mfg_minimizer(&spec, &m).unwrap();
    let hm = mfg_hamiltonian(&spec, &m, &bm).unwrap();
    for k in 0..100 {
        let v = bm[0] + ((k as f64) * 0.61).cos();
        assert!(hm <= mfg_hamiltonian(&spec, &m, &[v]).unwrap() + 1e-12);
    }
}

#[test]
fn zero_arguments_zero_hamiltonians() {
    let spec = zero_model(1, 1);
    let z = [0.0];
    assert_eq!(minor_hamiltonian(&spec, 0, 0.0, &z, &z, &z, &z, &z, &z), 0.0);
    let v = vec![vec![0.0]];
    let pt = NAgentPoint { t: 0.0, c0: &z, ci: &v, x0: &z, x: &v, y: &v, p0: &z, p: &v, r: &v };
    assert_eq!(major_hamiltonian(&spec, &pt, &z).unwrap(), 0.0);
    let m = MfgPoint { t: 0.0, c0: &z, c1: &z, x0: &z, x1: &z, y1: &z, ybar: &z, p0: &z, p1: &z, pbar: &z, r1: &z };
    assert_eq!(mfg_hamiltonian(&spec, &m, &z).unwrap(), 0.0);
}
