// Biasing the objective on the default three-bus system. Its two solution
// pairs disappear at the same controlled voltage, so the dual has a rank-4
// nullspace. Adding a small multiple of the slack reactive-power matrix to
// the objective favors one of the pairs, and the rank drops to 2.
//
// This only works on this small example; it is a demonstration, not part
// of the library.
//
//     cargo run --release --example objective_bias

use gridcert::caseio::{three_bus, ThreeBusParams};
use gridcert::linalg::eigvals_sym;
use gridcert::sdpcert::{build_matrices, dual_problem, nullspace_rank, solve, SolverOptions, RANK_TOL};

fn main() -> Result<(), gridcert::Error> {
    let model = three_bus(&ThreeBusParams::default())?;
    let (base, _) = dual_problem(&model)?;
    let q_slack = build_matrices(&model).ybar[model.slack()].to_dense();

    for eps in [-1e-3, 0.0, 1e-3] {
        let mut problem = base.clone();
        problem.c.axpy(eps, &q_slack);
        let r = solve(&problem, &SolverOptions::default());
        let eig = eigvals_sym(&r.a)?;
        println!(
            "bias {eps:+.0e}: objective {:.6}, nullspace rank {}, status {:?}",
            r.objective,
            nullspace_rank(&eig, RANK_TOL),
            r.status
        );
    }
    Ok(())
}
