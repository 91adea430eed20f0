//! Ready-made linear-quadratic models used by the test suites and the CLI
//! fixtures.

use crate::model::{
    C0Law, Coefficient, Dimensions, IdioAtom, IdioLaw, MajorCost, MajorSpec, MinorBundle, MinorPopulation,
    ModelSpec, NoiseSpec,
};

fn mat(n: usize, data: &[f64]) -> Coefficient {
    Coefficient::constant(n, n, data.to_vec()).expect("square data")
}

/// Noisy LQ benchmark with `n ∈ {1, 2}` securities, one common factor,
/// a Gaussian-walk c⁰, time- and c⁰-dependent coefficients and a two-atom
/// idiosyncratic law.
pub fn lq_benchmark(n: usize, agents: usize) -> ModelSpec {
    assert!(n == 1 || n == 2, "benchmark defined for n = 1, 2");
    let dims = Dimensions { n, d0: 1, d: 0, agents };
    let (lambda, lambda0, cf, cg, cf0, cg0) = if n == 1 {
        (mat(1, &[1.0]), mat(1, &[2.0]), mat(1, &[1.0]), mat(1, &[1.0]), mat(1, &[1.0]), mat(1, &[1.0]))
    } else {
        (
            mat(2, &[1.0, 0.2, 0.2, 1.5]),
            mat(2, &[2.0, 0.3, 0.3, 1.0]),
            mat(2, &[1.0, 0.3, 0.3, 0.8]),
            mat(2, &[1.2, -0.1, -0.1, 0.9]),
            mat(2, &[1.0, 0.1, 0.1, 0.7]),
            mat(2, &[0.8, 0.0, 0.0, 1.1]),
        )
    };
    let lambda = lambda.with_time((0..n * n).map(|k| if k % (n + 1) == 0 { 0.5 } else { 0.0 }).collect()).unwrap();
    let ones = |v: f64| vec![v; n];
    let unit = |k: usize, v: f64| {
        let mut e = vec![0.0; n];
        e[k] = v;
        e
    };
    // h^f = 0.1 + 0.2·c⁰, l = 0.1 + 0.3·cⁱ.
    let hf = Coefficient::vector(ones(0.1)).with_common((0..n).map(|k| unit(k, 0.2)).collect()).unwrap();
    let l = Coefficient::vector(ones(0.1)).with_idio(vec![ones(0.3)]).unwrap();
    let sigma0 = Coefficient::constant(n, 1, (0..n).map(|k| 0.3 - 0.1 * k as f64).collect()).unwrap();
    let bundle = MinorBundle {
        l,
        sigma0,
        sigma: Coefficient::zeros(n, 0),
        cf,
        hf,
        cg,
        hg: Coefficient::vector(ones(0.05)),
    };
    let major = MajorSpec {
        l0: Coefficient::vector(ones(0.2)),
        s0: Coefficient::constant(n, 1, ones(0.1)).unwrap(),
        running: MajorCost::quadratic(cf0, Coefficient::vector(ones(-0.1)).with_common((0..n).map(|k| unit(k, 0.1)).collect()).unwrap()),
        terminal: MajorCost::quadratic(cg0, Coefficient::vector(ones(0.0))),
    };
    let atoms = vec![
        IdioAtom { weight: 0.4, xi: ones(-0.5), c: vec![0.5] },
        IdioAtom { weight: 0.6, xi: (0..n).map(|k| 1.0 - 0.25 * k as f64).collect(), c: vec![-1.0] },
    ];
    ModelSpec {
        dims,
        delta: 0.2,
        lambda,
        lambda0,
        minor: MinorPopulation::Homogeneous(bundle),
        major,
        chi0: ones(0.5),
        idio: IdioLaw { atoms },
        c0_law: C0Law::Walk { initial: ones(1.0), drift: ones(0.1), vol: (0..n).map(|k| 0.2 + 0.1 * k as f64).collect() },
        maturity: false,
        noise: NoiseSpec { horizon: 1.0, steps: 4, branching: 2 },
    }
}

/// Atom `i mod #atoms` for each of `agents` agents.
pub fn round_robin_atoms(spec: &ModelSpec, agents: usize) -> Vec<usize> {
    (0..agents).map(|i| i % spec.idio.atoms.len()).collect()
}

/// The noiseless single-agent instance with closed form `Y_t = 2 − t`:
/// n = 1, N = 1, δ = 0, Λ = 1, l = σ⁰ = 0, c^f = c^g = 1, h = 0, ξ = 1, T = 1.
pub fn closed_form_minor(steps: usize) -> ModelSpec {
    let dims = Dimensions { n: 1, d0: 0, d: 0, agents: 1 };
    let mut spec = ModelSpec::zero(dims);
    spec.minor = MinorPopulation::Homogeneous(MinorBundle::quadratic(&dims, Coefficient::scalar(1.0), Coefficient::scalar(1.0)));
    spec.major = MajorSpec::quadratic(&dims, Coefficient::scalar(1.0), Coefficient::scalar(1.0));
    spec.lambda0 = Coefficient::scalar(2.0);
    spec.idio = IdioLaw::point_mass(vec![1.0]);
    spec.noise = NoiseSpec { horizon: 1.0, steps, branching: 2 };
    spec
}

/// Homogeneous scalar model with a two-atom ξ law {0, 1} of equal weight and
/// one common factor, used for the convergence study.
pub fn two_atom_scalar(agents: usize) -> ModelSpec {
    let mut spec = lq_benchmark(1, agents);
    spec.idio = IdioLaw::uniform(vec![vec![0.0], vec![1.0]]);
    if let MinorPopulation::Homogeneous(b) = &mut spec.minor {
        b.l = Coefficient::vector(vec![0.1]);
    }
    spec.noise = NoiseSpec { horizon: 1.0, steps: 3, branching: 2 };
    spec
}

/// Same model with a point-mass idiosyncratic law at ξ = 0.5.
pub fn point_mass_scalar(agents: usize) -> ModelSpec {
    let mut spec = two_atom_scalar(agents);
    spec.idio = IdioLaw::point_mass(vec![0.5]);
    spec
}

/// Maturity-mode fixture: securities pay c⁰_T at T. `walk` selects a
/// Gaussian-walk c⁰, otherwise c⁰ ≡ 5.
pub fn maturity_fixture(n: usize, agents: usize, walk: bool) -> ModelSpec {
    let mut spec = lq_benchmark(n, agents);
    spec.maturity = true;
    if !walk {
        spec.c0_law = C0Law::Constant { value: vec![5.0; n] };
    }
    spec
}

/// The all-zero model on a noisy lattice.
pub fn zero_model(n: usize, agents: usize) -> ModelSpec {
    let dims = Dimensions { n, d0: 1, d: 0, agents };
    let mut spec = ModelSpec::zero(dims);
    spec.major.s0 = Coefficient::zeros(n, 1);
    if let MinorPopulation::Homogeneous(b) = &mut spec.minor {
        b.sigma0 = Coefficient::zeros(n, 1);
    }
    spec
}
