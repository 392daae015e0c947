//! Log-det barrier path-following for
//!
//! ```text
//! maximize bᵀy  subject to  A(y) = C − Σ y_i F_i ⪰ 0
//! ```
//!
//! where each `F_i` is a sparse [`Stamp`]. A phase-I problem
//! (`A(y) + sI ≻ 0`, minimize `s`) supplies a strictly feasible start, since
//! `C` itself is usually singular.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrices::Stamp;
use crate::linalg::{cholesky_pd, dot, Cholesky, Lu, Matrix, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub c: SymMatrix,
    pub constraints: Vec<Stamp>,
    pub b: Vec<f64>,
}

impl SdpProblem {
    pub fn new(c: SymMatrix, constraints: Vec<Stamp>, b: Vec<f64>) -> Self {
        assert_eq!(constraints.len(), b.len(), "one objective weight per constraint");
        assert!(constraints.iter().all(|f| f.dim == c.n()));
        Self { c, constraints, b }
    }

    pub fn dim(&self) -> usize {
        self.c.n()
    }

    pub fn slack_matrix(&self, y: &[f64]) -> SymMatrix {
        let mut a = self.c.clone();
        for (f, &yi) in self.constraints.iter().zip(y) {
            if yi != 0.0 {
                f.add_into(&mut a, -yi);
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub t0: f64,
    pub t_ratio: f64,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_outer: usize,
    /// Newton steps allowed per centering.
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            t_ratio: 5.0,
            gap_tol: 1e-7,
            feas_tol: 1e-8,
            max_outer: 60,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    NumericalTrouble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpResult {
    pub y: Vec<f64>,
    pub objective: f64,
    pub a: SymMatrix,
    pub status: SdpStatus,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Final barrier weight.
    pub t: f64,
}

enum Centering {
    Done,
    Stopped,
    Trouble,
}

struct Barrier<'a> {
    p: &'a SdpProblem,
    y: Vec<f64>,
    chol: Cholesky,
    newton_steps: usize,
}

impl<'a> Barrier<'a> {
    fn new(p: &'a SdpProblem, y: Vec<f64>) -> Option<Self> {
        let chol = cholesky_pd(&p.slack_matrix(&y))?;
        Some(Self {
            p,
            y,
            chol,
            newton_steps: 0,
        })
    }

    /// Newton iterations on `−t bᵀy − logdet A(y)` until the decrement is
    /// tiny, or until `stop` fires on an accepted iterate.
    fn center(&mut self, t: f64, max_newton: usize, stop: &dyn Fn(&[f64]) -> bool) -> Centering {
        let mut prev_dec2 = f64::INFINITY;
        for _ in 0..max_newton {
            let w = self.chol.inverse();
            let (g, h) = grad_hess(&w, &self.p.constraints);
            let grad: Vec<f64> = g.iter().zip(&self.p.b).map(|(g, b)| g - t * b).collect();
            let Some(dy) = solve_spd(&h, &grad) else {
                return Centering::Trouble;
            };
            // dy solves H dy = ∇, the step is −dy.
            let dec2 = dot(&grad, &dy);
            if !dec2.is_finite() {
                return Centering::Trouble;
            }
            // Near the center rounding in H limits the decrement to ~1e-7,
            // so also stop once Newton stops contracting.
            if dec2 < 0.0 || dec2 / 2.0 <= 1e-9 || (dec2 < 1e-4 && dec2 > 0.25 * prev_dec2) {
                return Centering::Done;
            }
            prev_dec2 = dec2;
            // Backtracking on the barrier value from the full Newton step.
            let phi0 = -t * dot(&self.p.b, &self.y) - self.chol.log_det();
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = self.y.iter().zip(&dy).map(|(y, d)| y - step * d).collect();
                if let Some(c) = cholesky_pd(&self.p.slack_matrix(&trial)) {
                    let phi = -t * dot(&self.p.b, &trial) - c.log_det();
                    if phi <= phi0 - 0.01 * step * dec2 {
                        self.y = trial;
                        self.chol = c;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                return if dec2 < 1e-3 {
                    Centering::Done
                } else {
                    Centering::Trouble
                };
            }
            self.newton_steps += 1;
            if stop(&self.y) {
                return Centering::Stopped;
            }
        }
        Centering::Done
    }
}

/// Gradient `tr(W F_i)` and Hessian `tr(W F_i W F_j)` with `W = A⁻¹`.
///
/// A pair costs `|S_i| |S_j|²` when evaluated from row `i`, so rows are
/// visited in order of decreasing support and each computes only the pairs
/// with smaller stamps. Rows are independent, so the result does not depend
/// on how rayon schedules them.
fn grad_hess(w: &SymMatrix, cons: &[Stamp]) -> (Vec<f64>, Matrix) {
    let d = w.n();
    let wd = w.as_matrix().as_slice();
    let m = cons.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(cons[i].len()));
    let rows: Vec<(f64, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|r| {
            let fi = &cons[order[r]];
            let k = fi.len();
            // X = W[:, S_i] B_i, d x k
            let mut x = vec![0.0; d * k];
            for r in 0..d {
                let wr = &wd[r * d..(r + 1) * d];
                let xr = &mut x[r * k..(r + 1) * k];
                for a in 0..k {
                    let wa = wr[fi.idx[a]];
                    if wa == 0.0 {
                        continue;
                    }
                    let brow = &fi.block[a * k..(a + 1) * k];
                    for b in 0..k {
                        xr[b] += wa * brow[b];
                    }
                }
            }
            // tr(W F_i) = Σ_a X[S_i[a], a]
            let g: f64 = (0..k).map(|a| x[fi.idx[a] * k + a]).sum();
            let mut row = vec![0.0; m - r];
            for (jj, fj) in order[r..].iter().map(|&j| &cons[j]).enumerate() {
                // Σ_{p,q} (X W)[S_j[p], S_j[q]] B_j[q, p]
                let kj = fj.len();
                let mut h = 0.0;
                for p in 0..kj {
                    let xp = &x[fj.idx[p] * k..(fj.idx[p] + 1) * k];
                    for q in 0..kj {
                        let bqp = fj.block[q * kj + p];
                        if bqp == 0.0 {
                            continue;
                        }
                        let col = fj.idx[q];
                        let mut t = 0.0;
                        for b in 0..k {
                            t += xp[b] * wd[fi.idx[b] * d + col];
                        }
                        h += t * bqp;
                    }
                }
                row[jj] = h;
            }
            (g, row)
        })
        .collect();
    let mut hess = Matrix::zeros(m, m);
    let mut grad = vec![0.0; m];
    for (r, (g, row)) in rows.into_iter().enumerate() {
        let i = order[r];
        grad[i] = g;
        for (jj, v) in row.into_iter().enumerate() {
            let j = order[r + jj];
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (grad, hess)
}

fn solve_spd(h: &Matrix, rhs: &[f64]) -> Option<Vec<f64>> {
    let sym = SymMatrix::try_from_matrix(h.clone())?;
    if let Some(c) = cholesky_pd(&sym) {
        let x = c.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    Lu::factor(h).ok().map(|lu| lu.solve(rhs))
}

/// Finds `y` with `A(y) ≻ 0` by driving `s` below zero in
/// `A(y) + sI ≻ 0`, starting from `y = 0` and `s` one above a Gershgorin
/// bound on `−λ_min(C)`. Returns the point and the Newton steps used.
pub fn phase_one(p: &SdpProblem, opts: &SolverOptions) -> Result<(Vec<f64>, usize), SdpStatus> {
    let m = p.b.len();
    let d = p.dim();
    let start = vec![0.0; m];
    if cholesky_pd(&p.c).is_some() {
        return Ok((start, 0));
    }
    let gersh = (0..d)
        .map(|i| {
            let off: f64 = (0..d).filter(|&j| j != i).map(|j| p.c.get(i, j).abs()).sum();
            off - p.c.get(i, i)
        })
        .fold(0.0_f64, f64::max);
    let s0 = 1.0 + gersh;
    let mut cons = p.constraints.clone();
    let mut neg_eye = Stamp::identity(d);
    neg_eye.block.iter_mut().for_each(|v| *v = -*v);
    cons.push(neg_eye);
    let mut b = vec![0.0; m];
    b.push(-1.0);
    let aux = SdpProblem::new(p.c.clone(), cons, b);
    let mut y0 = start;
    y0.push(s0);
    let Some(mut bar) = Barrier::new(&aux, y0) else {
        return Err(SdpStatus::NumericalTrouble);
    };
    let stop = |y: &[f64]| y[m] < 0.0;
    // The phase-I center sits near s = d / t, so start where s0 is central.
    let mut t = d as f64 / s0;
    for _ in 0..opts.max_outer {
        match bar.center(t, opts.max_newton, &stop) {
            Centering::Stopped => {
                let mut y = bar.y;
                y.truncate(m);
                return Ok((y, bar.newton_steps));
            }
            Centering::Trouble => return Err(SdpStatus::NumericalTrouble),
            Centering::Done => {}
        }
        if stop(&bar.y) {
            let mut y = bar.y;
            y.truncate(m);
            return Ok((y, bar.newton_steps));
        }
        t *= opts.t_ratio;
    }
    Err(SdpStatus::MaxIter)
}

/// Solves the problem. The returned point always has `A(y)` positive
/// definite, so `bᵀy` is a valid lower bound on the optimum even when the
/// status is not [`SdpStatus::Optimal`].
pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> SdpResult {
    let d = p.dim() as f64;
    let fail = |status, y: Vec<f64>, steps| {
        let a = p.slack_matrix(&y);
        SdpResult {
            objective: if cholesky_pd(&a).is_some() { dot(&p.b, &y) } else { 0.0 },
            y,
            a,
            status,
            outer_iterations: 0,
            newton_steps: steps,
            t: 0.0,
        }
    };
    let (y0, phase1_steps) = match phase_one(p, opts) {
        Ok(r) => r,
        Err(status) => return fail(status, vec![0.0; p.b.len()], 0),
    };
    let Some(mut bar) = Barrier::new(p, y0.clone()) else {
        return fail(SdpStatus::NumericalTrouble, y0, phase1_steps);
    };
    bar.newton_steps = phase1_steps;
    let never = |_: &[f64]| false;
    let mut t = opts.t0;
    let mut status = SdpStatus::MaxIter;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        match bar.center(t, opts.max_newton, &never) {
            Centering::Trouble => {
                status = SdpStatus::NumericalTrouble;
                break;
            }
            Centering::Done | Centering::Stopped => {}
        }
        let obj = dot(&p.b, &bar.y);
        if d / t <= opts.gap_tol * (1.0 + obj.abs()) {
            status = SdpStatus::Optimal;
            break;
        }
        t *= opts.t_ratio;
    }
    let a = p.slack_matrix(&bar.y);
    SdpResult {
        objective: dot(&p.b, &bar.y),
        y: bar.y,
        a,
        status,
        outer_iterations: outer,
        newton_steps: bar.newton_steps,
        t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigvals_sym;

    fn diag_stamp(dim: usize, entries: &[(usize, f64)]) -> Stamp {
        let mut m = SymMatrix::zeros(dim);
        for &(i, v) in entries {
            m.set(i, i, v);
        }
        Stamp::from_dense(&m)
    }

    #[test]
    fn diagonal_lp() {
        // maximize y1 + y2 s.t. diag(1 − y1, 2 − y2, 3 + y1 + y2) ⪰ 0 → 3 at (1, 2).
        let c = SymMatrix::from_diag(&[1.0, 2.0, 3.0]);
        let f1 = diag_stamp(3, &[(0, 1.0), (2, -1.0)]);
        let f2 = diag_stamp(3, &[(1, 1.0), (2, -1.0)]);
        let r = solve(&SdpProblem::new(c, vec![f1, f2], vec![1.0, 1.0]), &SolverOptions::default());
        assert_eq!(r.status, SdpStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-6, "{}", r.objective);
    }

    #[test]
    fn largest_eigenvalue_bound() {
        // maximize y s.t. S − y I ⪰ 0 gives λ_min(S).
        let s = SymMatrix::from_upper_fn(4, |i, j| if i == j { 3.0 + i as f64 } else { 0.5 });
        let want = eigvals_sym(&s).unwrap()[0];
        let r = solve(
            &SdpProblem::new(s, vec![Stamp::identity(4)], vec![1.0]),
            &SolverOptions::default(),
        );
        assert_eq!(r.status, SdpStatus::Optimal);
        assert!((r.objective - want).abs() < 1e-6);
    }

    #[test]
    fn singular_c_needs_phase_one() {
        // C = diag(1, 0); maximize y s.t. diag(1 + y, −y) ⪰ 0. y = 0 is
        // optimal but not strictly feasible.
        let c = SymMatrix::from_diag(&[1.0, 0.0]);
        let f = diag_stamp(2, &[(0, -1.0), (1, 1.0)]);
        let r = solve(&SdpProblem::new(c, vec![f], vec![1.0]), &SolverOptions::default());
        assert_eq!(r.status, SdpStatus::Optimal);
        assert!(r.objective.abs() < 1e-6 && r.y[0] < 0.0);
    }

    #[test]
    fn returned_matrix_is_psd() {
        let c = SymMatrix::from_diag(&[1.0, 0.0, 0.0]);
        let mut m = SymMatrix::zeros(3);
        m.set(0, 1, 1.0);
        m.set(2, 2, -1.0);
        m.set(1, 1, -1.0);
        let r = solve(
            &SdpProblem::new(c, vec![Stamp::from_dense(&m)], vec![1.0]),
            &SolverOptions::default(),
        );
        let w = eigvals_sym(&r.a).unwrap();
        assert!(w[0] >= -1e-12, "{w:?}");
    }
}
