use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;

use super::{backward_sweep, check_lattice, residual, FbsdeSystem, NodeSolution, SolveDiagnostics, SolveMethod};
use crate::error::{Error, Result};
use crate::scenario::{NodeField, NoiseLattice};

/// Cap on the number of unknowns of the global linear system.
pub const MAX_UNKNOWNS: usize = 4_000_000;

static SEQUENTIAL: Once = Once::new();

/// Affine map `x ↦ J x + c`, `J` stored sparsely by rows.
struct Affine {
    constant: Vec<f64>,
    /// (row, col, value)
    entries: Vec<(usize, usize, f64)>,
}

fn probe(out_dim: usize, in_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Affine {
    let mut x = vec![0.0; in_dim];
    let mut constant = vec![0.0; out_dim];
    f(&x, &mut constant);
    let mut col = vec![0.0; out_dim];
    let mut entries = Vec::new();
    for j in 0..in_dim {
        x[j] = 1.0;
        f(&x, &mut col);
        x[j] = 0.0;
        for i in 0..out_dim {
            let d = col[i] - constant[i];
            if d != 0.0 {
                entries.push((i, j, d));
            }
        }
    }
    Affine { constant, entries }
}

/// Assemble every discrete equation of an affine system into one sparse
/// matrix and solve it with a sparse LU factorization.
///
/// Unknowns are ordered node by node as `[F_v, B_v]`; the row block of node
/// `v` holds its forward equation (initial condition at the root, Euler step
/// from the parent otherwise) and its backward equation (terminal condition
/// on leaves, conditional expectation otherwise).
pub fn solve_direct<S: FbsdeSystem + ?Sized>(system: &S, lattice: &NoiseLattice) -> Result<NodeSolution> {
    if !system.is_affine() {
        return Err(Error::Unsupported("direct solve needs an affine system".into()));
    }
    check_lattice(lattice)?;
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    let fd = system.forward_dim();
    let bd = system.backward_dim();
    let stride = fd + bd;
    let nodes = lattice.len();
    let unknowns = nodes * stride;
    if unknowns > MAX_UNKNOWNS {
        return Err(Error::NodeBudget { required: unknowns, budget: MAX_UNKNOWNS });
    }
    let dt = lattice.dt();

    // Driver jacobians are needed at every non-root node, by the parent's row.
    let drivers: Vec<Option<Affine>> = (0..nodes)
        .into_par_iter()
        .map(|v| (v > 0).then(|| probe(bd, fd, |x, out| system.driver(v, x, out))))
        .collect();

    let blocks: Vec<(Vec<Triplet<usize, usize, f64>>, Vec<f64>)> = (0..nodes)
        .into_par_iter()
        .map(|v| {
            let mut trip = Vec::new();
            let mut rhs = vec![0.0; stride];
            let row0 = v * stride;
            // Forward rows of v.
            match lattice.parent(v) {
                None => {
                    system.initial(&mut rhs[..fd]);
                    for i in 0..fd {
                        trip.push(Triplet::new(row0 + i, row0 + i, 1.0));
                    }
                }
                Some(p) => {
                    let drift = probe(fd, stride, |x, out| system.drift(p, &x[..fd], &x[fd..], out));
                    let mut noise = vec![0.0; fd];
                    system.noise(p, lattice.increment(v), &mut noise);
                    let pcol = p * stride;
                    let mut diag = vec![0.0; fd];
                    for i in 0..fd {
                        trip.push(Triplet::new(row0 + i, row0 + i, 1.0));
                        rhs[i] = dt * drift.constant[i] + noise[i];
                    }
                    for &(i, j, a) in &drift.entries {
                        if j < fd && j == i {
                            diag[i] = a;
                        } else {
                            trip.push(Triplet::new(row0 + i, pcol + j, -dt * a));
                        }
                    }
                    for i in 0..fd {
                        trip.push(Triplet::new(row0 + i, pcol + i, -1.0 - dt * diag[i]));
                    }
                }
            }
            // Backward rows of v.
            let brow = row0 + fd;
            for i in 0..bd {
                trip.push(Triplet::new(brow + i, brow + i, 1.0));
            }
            if lattice.is_terminal(v) {
                let term = probe(bd, fd, |x, out| system.terminal(v, x, out));
                rhs[fd..fd + bd].copy_from_slice(&term.constant[..bd]);
                for &(i, j, a) in &term.entries {
                    trip.push(Triplet::new(brow + i, row0 + j, -a));
                }
            } else {
                for c in lattice.children(v) {
                    let pc = lattice.conditional_probability(c);
                    let g = drivers[c].as_ref().expect("child has a driver");
                    let ccol = c * stride;
                    for i in 0..bd {
                        trip.push(Triplet::new(brow + i, ccol + fd + i, -pc));
                        rhs[fd + i] += pc * dt * g.constant[i];
                    }
                    for &(i, j, a) in &g.entries {
                        trip.push(Triplet::new(brow + i, ccol + j, -pc * dt * a));
                    }
                }
            }
            (trip, rhs)
        })
        .collect();

    let mut triplets = Vec::with_capacity(blocks.iter().map(|b| b.0.len()).sum());
    let mut rhs = Vec::with_capacity(unknowns);
    for (t, r) in blocks {
        triplets.extend(t);
        rhs.extend(r);
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(unknowns, unknowns, &triplets)
        .map_err(|e| Error::Singular(format!("matrix assembly failed: {e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
    let x = lu.solve(faer::col::Col::from_fn(unknowns, |i| rhs[i]));

    let mut forward = NodeField::zeros(nodes, fd);
    let mut backward = NodeField::zeros(nodes, bd);
    for v in 0..nodes {
        for i in 0..fd {
            forward.get_mut(v)[i] = x[v * stride + i];
        }
        for i in 0..bd {
            backward.get_mut(v)[i] = x[v * stride + fd + i];
        }
    }
    if !forward.as_slice().iter().chain(backward.as_slice()).all(|v| v.is_finite()) {
        return Err(Error::Singular(format!(
            "non-finite solution over {unknowns} unknowns; the discrete system is singular (monotonicity violated?)"
        )));
    }
    // Increments from the solved fields; the recomputed backward field is
    // discarded so the reported solution is the LU solution itself.
    let (_, increments) = backward_sweep(system, lattice, &forward);
    let mut solution = NodeSolution {
        forward,
        backward,
        increments,
        diagnostics: SolveDiagnostics {
            method: SolveMethod::Direct,
            iterations: 1,
            max_equation_residual: 0.0,
            terminal_mismatch: 0.0,
            tolerance: super::RESIDUAL_TOL,
            converged: true,
        },
    };
    let diag = residual(system, lattice, &solution);
    let scale = 1.0f64.max(solution.forward.max_abs()).max(solution.backward.max_abs());
    if !(diag.max_equation_residual <= 1e-6 * scale) {
        return Err(Error::Singular(format!(
            "direct solve left residual {:e}; the discrete system is numerically singular",
            diag.max_equation_residual
        )));
    }
    solution.diagnostics = diag;
    Ok(solution)
}
