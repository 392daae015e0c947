// Tunes the reactance of line 1-2 in the three-bus system until its two
// pairs of power flow solutions disappear at the same controlled-voltage
// scale, which is the situation where the semidefinite relaxation is not
// tight and the dual matrix has a rank-4 nullspace.
//
// Each fold (saddle-node) point is located directly by Newton's method on
//
// ```text
// F(x, s) = 0,   J(x, s)ᵀ w = 0,   wᵀw = 1
// ```
//
// with `x = (δ1, δ3, V3)` and `s` the controlled-voltage scale, then a
// secant iteration on `x12` drives the two fold scales together.
//
// Run with `cargo run --release --example coincident_folds`.

use gridcert::caseio::{three_bus, ThreeBusParams, THREE_BUS_TUNED_X12};
use gridcert::linalg::{eig_sym, solve_linear, Matrix, SymMatrix};
use gridcert::powerflow::{
    enumerate_solutions, jacobian, mismatch, state_distance, MultistartGrid, PowerFlowState,
};

fn params(x12: f64) -> ThreeBusParams {
    ThreeBusParams {
        z12: (ThreeBusParams::default().z12.0, x12),
        ..ThreeBusParams::default()
    }
}

fn state(z: &[f64]) -> PowerFlowState {
    // Bus order: 1 (PV), 2 (slack), 3 (PQ).
    PowerFlowState {
        v: vec![z[3], z[3], z[2]],
        delta: vec![z[0], 0.0, z[1]],
    }
}

/// `[F; Jᵀw; wᵀw − 1]` at `z = (δ1, δ3, V3, s, w0, w1, w2)`.
fn fold_residual(p: &ThreeBusParams, z: &[f64]) -> Option<Vec<f64>> {
    let model = three_bus(p).ok()?.scale_controlled_voltages(z[3]).ok()?;
    let st = state(z);
    let mut g = mismatch(&model, &st).unwrap();
    let j = jacobian(&model, &st).unwrap();
    let w = &z[4..7];
    g.extend((0..3).map(|c| (0..3).map(|r| j[(r, c)] * w[r]).sum::<f64>()));
    g.push(w.iter().map(|v| v * v).sum::<f64>() - 1.0);
    Some(g)
}

fn fold_newton(p: &ThreeBusParams, mut z: Vec<f64>) -> Option<Vec<f64>> {
    for _ in 0..50 {
        let g = fold_residual(p, &z)?;
        if g.iter().all(|v| v.abs() < 1e-13) {
            return Some(wrapped(z));
        }
        let h = 1e-7;
        let mut cols = Vec::with_capacity(7);
        for c in 0..7 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            let (gp, gm) = (fold_residual(p, &zp)?, fold_residual(p, &zm)?);
            cols.push(gp.iter().zip(gm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        let jac = Matrix::from_fn(7, 7, |r, c| cols[c][r]);
        let dz = solve_linear(&jac, &g).ok()?;
        for (zi, d) in z.iter_mut().zip(dz) {
            *zi -= d;
        }
    }
    let g = fold_residual(p, &z)?;
    g.iter().all(|v| v.abs() < 1e-10).then(|| wrapped(z))
}

fn wrapped(mut z: Vec<f64>) -> Vec<f64> {
    use std::f64::consts::PI;
    for a in &mut z[..2] {
        *a = (*a + PI).rem_euclid(2.0 * PI) - PI;
    }
    z
}

/// Starting guesses for every fold: scan the scale downward and start from
/// each solution that has vanished one step later.
fn initial_folds(p: &ThreeBusParams) -> Vec<Vec<f64>> {
    let grid = MultistartGrid::dense(24, 8);
    let sols = |s: f64| {
        let m = three_bus(p).unwrap().scale_controlled_voltages(s).unwrap();
        enumerate_solutions(&m, &grid).unwrap()
    };
    let mut guesses = Vec::new();
    let mut s = 1.0;
    let mut prev = sols(s);
    while s > 0.05 && !prev.is_empty() {
        let next = sols(s - 0.005);
        let gone: Vec<&PowerFlowState> = prev
            .iter()
            .filter(|a| next.iter().all(|b| state_distance(a, b) > 0.02))
            .collect();
        for a in gone {
            let mut z = vec![a.delta[0], a.delta[2], a.v[2], s];
            let model = three_bus(p).unwrap().scale_controlled_voltages(s).unwrap();
            let j = jacobian(&model, &state(&z)).unwrap();
            let jjt = SymMatrix::symmetrize(&j.matmul(&j.transpose()));
            z.extend(eig_sym(&jjt).unwrap().vector(0));
            guesses.push(z);
        }
        prev = next;
        s -= 0.005;
    }
    guesses
}

fn null_rank(x12: f64) -> usize {
    let model = three_bus(&params(x12)).unwrap();
    gridcert::sdpcert::solve_dual(&model, &Default::default())
        .unwrap()
        .nullspace_rank
}

fn main() {
    let mut x12 = 0.049;
    let mut folds: Vec<Vec<f64>> = Vec::new();
    for z in initial_folds(&params(x12)) {
        if let Some(z) = fold_newton(&params(x12), z) {
            let seen = folds
                .iter()
                .any(|f| (0..4).all(|i| (f[i] - z[i]).abs() < 1e-6));
            if !seen && z[2] > 0.0 {
                folds.push(z);
            }
        }
    }
    // The last two pairs to disappear.
    folds.sort_by(|a, b| a[3].total_cmp(&b[3]));
    folds.truncate(2);
    let gap = |f: &[Vec<f64>]| f[1][3] - f[0][3];
    println!(
        "x12 = {x12:.6}: folds at {:.8} and {:.8}, nullspace rank {}",
        folds[0][3],
        folds[1][3],
        null_rank(x12)
    );

    let mut prev = (x12, gap(&folds));
    x12 *= 1.01;
    for _ in 0..100 {
        folds = folds
            .iter()
            .map(|z| fold_newton(&params(x12), z.clone()).expect("fold continuation"))
            .collect();
        let separation: f64 = (0..3).map(|i| (folds[0][i] - folds[1][i]).abs()).sum();
        assert!(separation > 0.05, "the two folds merged");
        let g = gap(&folds);
        println!("x12 = {x12:.15}: gap {g:.3e}");
        if g.abs() < 1e-13 {
            break;
        }
        let step = -g * (x12 - prev.0) / (g - prev.1);
        prev = (x12, g);
        x12 += step.clamp(-0.03 * x12, 0.03 * x12);
    }
    println!(
        "tuned x12 = {x12:.15} (bundled default {THREE_BUS_TUNED_X12}), common fold scale {:.8}, nullspace rank {}",
        folds[0][3],
        null_rank(x12)
    );
}
