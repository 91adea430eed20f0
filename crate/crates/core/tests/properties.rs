use clearing_core::benchmarks::{lq_benchmark, maturity_fixture, round_robin_atoms};
use clearing_core::finite_market::{solve_full_equilibrium_with, SolverChoice};
use clearing_core::metrics::{epsilon_rate, price_gap, wasserstein1_1d, wasserstein2, wasserstein2_assignment, EmpiricalMeasure};
use clearing_core::model::{check_minor_assumptions, scale_major, C0Law, Coefficient, IdioLaw, MinorPopulation, ModelSpec};
use clearing_core::scenario::{
    build_lattice_with_budget, evaluate_exogenous, sample_idiosyncratic, NodeField, NoiseLattice, TimeGrid,
    DEFAULT_SEED,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(dim: usize, len: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-3.0f64..3.0, dim * len).prop_map(move |pts| EmpiricalMeasure::uniform(dim, pts).unwrap())
}

fn triple() -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure, EmpiricalMeasure)> {
    (1usize..=3, 1usize..=6).prop_flat_map(|(d, n)| (cloud(d, n), cloud(d, n), cloud(d, n)))
}

fn pair_1d() -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure)> {
    (1usize..=8).prop_flat_map(|n| (cloud(1, n), cloud(1, n)))
}

fn lattice(spec: &ModelSpec, steps: usize) -> NoiseLattice {
    build_lattice_with_budget(TimeGrid::new(spec.noise.horizon, steps).unwrap(), spec.dims.d0, 2, 1 << 16).unwrap()
}

proptest! {
    #[test]
    fn w2_is_a_metric((a, b, c) in triple()) {
        let ab = wasserstein2(&a, &b).unwrap();
        prop_assert_eq!(ab, wasserstein2(&b, &a).unwrap());
        prop_assert_eq!(wasserstein2(&a, &a).unwrap(), 0.0);
        let ac = wasserstein2(&a, &c).unwrap();
        let bc = wasserstein2(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        let dm: f64 = a.mean().iter().zip(b.mean()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assert!(dm <= ab + 1e-12);
    }

    #[test]
    fn one_dimensional_paths_agree((a, b) in pair_1d()) {
        let sorted = wasserstein2(&a, &b).unwrap();
        let assigned = wasserstein2_assignment(&a, &b).unwrap();
        prop_assert!((sorted - assigned).abs() <= 1e-12);
        let w1 = wasserstein1_1d(&a, &b).unwrap();
        let dm = (a.mean()[0] - b.mean()[0]).abs();
        prop_assert!(dm <= w1 + 1e-12);
        prop_assert!(w1 <= sorted + 1e-12);
    }

    #[test]
    fn lattice_moments(steps in 1usize..=4, d0 in 0usize..=2, branching in 2usize..=3) {
        let grid = TimeGrid::new(1.5, steps).unwrap();
        let lat = build_lattice_with_budget(grid, d0, branching, 1 << 16).unwrap();
        let per_step = branching.pow(d0 as u32);
        prop_assert_eq!(lat.len(), (0..=steps).map(|k| per_step.pow(k as u32)).sum::<usize>());
        for v in lat.non_terminal() {
            let kids: Vec<usize> = lat.children(v).collect();
            let total: f64 = kids.iter().map(|&c| lat.conditional_probability(c)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for q in 0..d0 {
                let mean: f64 = kids.iter().map(|&c| lat.conditional_probability(c) * lat.increment(c)[q]).sum();
                let var: f64 = kids.iter().map(|&c| lat.conditional_probability(c) * lat.increment(c)[q].powi(2)).sum();
                prop_assert!(mean.abs() < 1e-12);
                prop_assert!((var - lat.dt()).abs() < 1e-12);
            }
        }
        for k in 0..=steps {
            prop_assert!((lat.level_probability(k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn price_gap_is_a_squared_seminorm(vals in prop::collection::vec(-5.0f64..5.0, 14), shift in -2.0f64..2.0) {
        let spec = lq_benchmark(2, 1);
        let lat = lattice(&spec, 2);
        let a = NodeField::from_vec(2, vals).unwrap();
        let b = NodeField::from_fn(&lat, 2, |v, out| out.iter_mut().zip(a.get(v)).for_each(|(o, x)| *o = x + shift));
        let ab = price_gap(&a, &b, &lat).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, price_gap(&b, &a, &lat).unwrap());
        prop_assert_eq!(price_gap(&a, &a, &lat).unwrap(), 0.0);
        // constant shift on both coordinates over non-terminal nodes: 2·shift²·T
        prop_assert!((ab - 2.0 * shift * shift * spec.noise.horizon).abs() < 1e-9);
    }

    #[test]
    fn epsilon_rate_decreases(n in 1usize..=6, agents in 5usize..10_000) {
        prop_assert!(epsilon_rate(agents + 1, n) < epsilon_rate(agents, n));
    }

    #[test]
    fn minor_b_constant_monotone_in_delta(d1 in 0.0f64..0.9, d2 in 0.0f64..0.9, slope in 0.1f64..1.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = |delta: f64| {
            let mut spec = lq_benchmark(1, 2);
            spec.delta = delta;
            if let MinorPopulation::Homogeneous(b) = &mut spec.minor {
                b.cg = Coefficient::scalar(1.0).with_time(vec![slope]).unwrap();
            }
            let pts = spec.default_sample_points();
            check_minor_assumptions(&spec, None, &pts).unwrap().a_const.unwrap()
        };
        prop_assert!(a(lo) <= a(hi) + 1e-12);
    }

    #[test]
    fn scaling_composes(n1 in 1usize..50, n2 in 1usize..50, x in -3.0f64..3.0, t in 0.0f64..1.0) {
        let spec = lq_benchmark(1, 1);
        let c0 = [0.7];
        let composed = scale_major(&spec, n1).unwrap().rescale(n2).unwrap();
        let direct = scale_major(&spec, n1 * n2).unwrap();
        prop_assert_eq!(composed.factor(), direct.factor());
        prop_assert_eq!(composed.l0(t, &c0), direct.l0(t, &c0));
        // f̄₀(N·y) = N·𝔣̄₀(y)
        let big_n = direct.factor();
        let lhs = direct.f_bar(t, &[big_n * x], &c0);
        let rhs = big_n * spec.major.running.value(t, &[x], &c0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        let unit = scale_major(&spec, 1).unwrap();
        prop_assert_eq!(unit.dfdx(t, &[x], &c0), { let mut g = vec![0.0]; spec.major.running.gradient(t, &[x], &c0, &mut g); g });
    }

    #[test]
    fn sampling_is_prefix_stable(seed in any::<u64>(), n1 in 1usize..40, extra in 0usize..40) {
        let law = IdioLaw::uniform(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let short = sample_idiosyncratic(&law, n1, seed).unwrap();
        let long = sample_idiosyncratic(&law, n1 + extra, seed).unwrap();
        prop_assert_eq!(&long[..n1], &short[..]);
        prop_assert!(long.iter().all(|&a| a < 3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_scalar_markets_clear(
        lambda in 0.5f64..3.0,
        lambda0 in 0.5f64..3.0,
        delta in 0.0f64..0.6,
        cf in 0.2f64..2.0,
        cg in 0.2f64..2.0,
        agents in 1usize..=4,
        steps in 1usize..=4,
    ) {
        let mut spec = lq_benchmark(1, agents);
        spec.lambda = Coefficient::scalar(lambda);
        spec.lambda0 = Coefficient::scalar(lambda0);
        spec.delta = delta;
        if let MinorPopulation::Homogeneous(b) = &mut spec.minor {
            b.cf = Coefficient::scalar(cf);
            b.cg = Coefficient::scalar(cg);
        }
        let lat = lattice(&spec, steps);
        let atoms = round_robin_atoms(&spec, agents);
        let eq = solve_full_equilibrium_with(&spec, &lat, &atoms, SolverChoice::Direct).unwrap();
        prop_assert!(eq.clearing_residual <= 1e-10);
        for v in lat.terminal_nodes() {
            prop_assert_eq!(eq.beta_hat.get(v), &[0.0]);
        }
        // relabelling agents leaves the price unchanged
        let reversed: Vec<usize> = atoms.iter().rev().copied().collect();
        let rev = solve_full_equilibrium_with(&spec, &lat, &reversed, SolverChoice::Direct).unwrap();
        prop_assert!(rev.price.max_abs_diff(&eq.price) <= 1e-12);
    }

    #[test]
    fn maturity_pins_terminal_price(initial in -2.0f64..2.0, drift in -1.0f64..1.0, vol in 0.0f64..0.5, agents in 1usize..=3) {
        let mut spec = maturity_fixture(1, agents, true);
        spec.c0_law = C0Law::Walk { initial: vec![initial], drift: vec![drift], vol: vec![vol] };
        let lat = lattice(&spec, 3);
        let exo = evaluate_exogenous(&lat, &spec).unwrap();
        let eq = solve_full_equilibrium_with(&spec, &lat, &round_robin_atoms(&spec, agents), SolverChoice::Direct).unwrap();
        for v in lat.terminal_nodes() {
            prop_assert!((eq.price.get(v)[0] - exo.c0.get(v)[0]).abs() <= 1e-12);
        }
    }
}

/// Independent re-derivation of the per-agent draw: ChaCha8 seeded with the
/// run seed, stream = agent index, one uniform compared against the CDF.
#[test]
fn sample_mean_regression() {
    let law = IdioLaw::uniform(vec![vec![0.0], vec![1.0]]);
    let agents = 10_000;
    let atoms = sample_idiosyncratic(&law, agents, DEFAULT_SEED).unwrap();
    let oracle: Vec<usize> = (0..agents)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
            rng.set_stream(i as u64);
            usize::from(rng.random::<f64>() >= 0.5)
        })
        .collect();
    assert_eq!(atoms, oracle);
    let ones: usize = atoms.iter().sum();
    assert_eq!(ones, 5058);
    assert!((ones as f64 / agents as f64 - 0.5).abs() < 0.02);
}
