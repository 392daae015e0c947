//! Power balance, Newton-Raphson, zero-injection solutions and multistart
//! enumeration of all solutions on tiny systems.
//!
//! Unknowns are ordered as `(δ at non-slack buses, V at PQ buses)` and the
//! mismatch as `(P at non-slack buses, Q at PQ buses)`, both in model order.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm_inf, singular_values, Lu, Matrix};
use crate::netmodel::{BusKind, NetworkModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("state has {got} buses, model has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("no zero-injection solution found: {0}")]
    NotFound(String),
    #[error(
        "eliminating PQ buses leaves a zero-impedance connection; perturb the \
         line data slightly and retry"
    )]
    ZeroImpedanceAfterReduction,
    #[error("multistart enumeration is limited to {limit} buses, model has {buses}")]
    GuardExceeded { buses: usize, limit: usize },
}

/// Polar bus voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
}

impl PowerFlowState {
    /// Setpoint magnitudes at PV/slack buses, 1.0 elsewhere, all angles zero.
    pub fn flat(model: &NetworkModel) -> Self {
        let v = model
            .buses()
            .iter()
            .map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.v_set })
            .collect();
        Self {
            v,
            delta: vec![0.0; model.n_buses()],
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// `(V cos δ, V sin δ)` stacked, length `2n`.
    pub fn rectangular(&self) -> Vec<f64> {
        let re = self.v.iter().zip(&self.delta).map(|(v, d)| v * d.cos());
        let im = self.v.iter().zip(&self.delta).map(|(v, d)| v * d.sin());
        re.chain(im).collect()
    }

    pub fn from_rectangular(x: &[f64]) -> Self {
        let n = x.len() / 2;
        let (v, delta) = (0..n)
            .map(|i| {
                let (e, f) = (x[i], x[n + i]);
                (e.hypot(f), f.atan2(e))
            })
            .unzip();
        Self { v, delta }
    }

    pub fn complex(&self) -> Vec<Complex64> {
        self.v
            .iter()
            .zip(&self.delta)
            .map(|(&v, &d)| Complex64::from_polar(v, d))
            .collect()
    }

    /// Flips negative magnitudes into the angle, wraps angles to (-π, π] and
    /// shifts them so the slack angle is zero.
    pub fn normalized(&self, slack: usize) -> Self {
        let mut v = self.v.clone();
        let mut delta = self.delta.clone();
        for i in 0..v.len() {
            if v[i] < 0.0 {
                v[i] = -v[i];
                delta[i] += PI;
            }
        }
        let reference = delta[slack];
        for d in &mut delta {
            *d = wrap_angle(*d - reference);
        }
        Self { v, delta }
    }

    /// Scales every magnitude by `beta`, keeping angles.
    pub fn scaled(&self, beta: f64) -> Self {
        Self {
            v: self.v.iter().map(|v| v * beta).collect(),
            delta: self.delta.clone(),
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn check_dims(model: &NetworkModel, state: &PowerFlowState) -> Result<(), PowerFlowError> {
    let n = model.n_buses();
    if state.v.len() != n || state.delta.len() != n {
        return Err(PowerFlowError::DimensionMismatch {
            expected: n,
            got: state.v.len().min(state.delta.len()),
        });
    }
    Ok(())
}

/// Net injections `P + jQ = V ∘ conj(Y V)` at every bus.
pub fn injections(model: &NetworkModel, state: &PowerFlowState) -> (Vec<f64>, Vec<f64>) {
    let v = state.complex();
    let i = model.admittance().mul_vec(&v);
    v.iter()
        .zip(&i)
        .map(|(v, i)| {
            let s = v * i.conj();
            (s.re, s.im)
        })
        .unzip()
}

/// Mismatch `(P − P_spec at non-slack, Q − Q_spec at PQ)`.
pub fn mismatch(model: &NetworkModel, state: &PowerFlowState) -> Result<Vec<f64>, PowerFlowError> {
    check_dims(model, state)?;
    let (p, q) = injections(model, state);
    let buses = model.buses();
    let mut r: Vec<f64> = model
        .non_slack()
        .iter()
        .map(|&k| p[k] - buses[k].p_inj)
        .collect();
    r.extend(model.pq().iter().map(|&k| q[k] - buses[k].q_inj));
    Ok(r)
}

/// Analytic Jacobian of [`mismatch`] with respect to `(δ non-slack, V PQ)`.
pub fn jacobian(model: &NetworkModel, state: &PowerFlowState) -> Result<Matrix, PowerFlowError> {
    check_dims(model, state)?;
    let y = model.admittance();
    let v = state.complex();
    let vn: Vec<Complex64> = state
        .delta
        .iter()
        .map(|&d| Complex64::from_polar(1.0, d))
        .collect();
    let cur = y.mul_vec(&v);
    let j = Complex64::new(0.0, 1.0);
    // dS_i/dδ_k = j V_i conj(δ_ik I_i − Y_ik V_k)
    let ds_dangle = |i: usize, k: usize| {
        let mut t = -y[(i, k)] * v[k];
        if i == k {
            t += cur[i];
        }
        j * v[i] * t.conj()
    };
    // dS_i/dV_k = V_i conj(Y_ik e^{jδ_k}) + δ_ik conj(I_i) e^{jδ_i}
    let ds_dmag = |i: usize, k: usize| {
        let mut t = v[i] * (y[(i, k)] * vn[k]).conj();
        if i == k {
            t += cur[i].conj() * vn[i];
        }
        t
    };
    let ns = model.non_slack();
    let pq = model.pq();
    let m = ns.len() + pq.len();
    let mut jac = Matrix::zeros(m, m);
    for (r, &i) in ns.iter().enumerate() {
        for (c, &k) in ns.iter().enumerate() {
            jac[(r, c)] = ds_dangle(i, k).re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, ns.len() + c)] = ds_dmag(i, k).re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in ns.iter().enumerate() {
            jac[(ns.len() + r, c)] = ds_dangle(i, k).im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(ns.len() + r, ns.len() + c)] = ds_dmag(i, k).im;
        }
    }
    Ok(jac)
}

/// Writes an unknown vector back into a state.
fn apply_step(model: &NetworkModel, state: &mut PowerFlowState, dx: &[f64], sign: f64) {
    let ns = model.non_slack();
    for (c, &k) in ns.iter().enumerate() {
        state.delta[k] += sign * dx[c];
    }
    for (c, &k) in model.pq().iter().enumerate() {
        state.v[k] += sign * dx[ns.len() + c];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NrOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_mismatch: f64,
    pub state: Option<PowerFlowState>,
}

/// Plain full-step Newton-Raphson. Running out of iterations is reported in
/// the [`SolveReport`]; a singular Jacobian is an error.
pub fn nr_solve(
    model: &NetworkModel,
    initial: &PowerFlowState,
    opts: &NrOptions,
) -> Result<SolveReport, PowerFlowError> {
    check_dims(model, initial)?;
    let mut state = initial.clone();
    // PV and slack magnitudes are fixed by their setpoints.
    for (k, b) in model.buses().iter().enumerate() {
        if b.kind != BusKind::Pq {
            state.v[k] = b.v_set;
        }
    }
    let slack = model.slack();
    let mut f = mismatch(model, &state)?;
    let mut err = norm_inf(&f);
    let mut iterations = 0;
    while !(err <= opts.tol) && iterations < opts.max_iter && err.is_finite() {
        let jac = jacobian(model, &state)?;
        let lu = Lu::factor(&jac).map_err(|_| PowerFlowError::SingularJacobian {
            iteration: iterations,
        })?;
        let dx = lu.solve(&f);
        apply_step(model, &mut state, &dx, -1.0);
        iterations += 1;
        f = mismatch(model, &state)?;
        err = norm_inf(&f);
    }
    let converged = err <= opts.tol;
    Ok(SolveReport {
        converged,
        iterations,
        final_mismatch: err,
        state: converged.then(|| state.normalized(slack)),
    })
}

/// Zero-injection operating point with equal angles and the PV-bus shunt
/// susceptances `delta_d` that absorb the PV reactive injections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroInjectionSolution {
    pub state: PowerFlowState,
    /// Keyed by PV bus id.
    pub delta_d: BTreeMap<usize, f64>,
}

impl ZeroInjectionSolution {
    /// Copy of `model` with the `delta_d` shunts installed and every
    /// specified injection zeroed.
    pub fn installed(&self, model: &NetworkModel) -> NetworkModel {
        let buses = model
            .buses()
            .iter()
            .map(|b| {
                let mut b = b.clone();
                b.p_inj = 0.0;
                b.q_inj = 0.0;
                if let Some(d) = self.delta_d.get(&b.id) {
                    b.shunt_b += d;
                }
                b
            })
            .collect();
        model.with_buses(buses)
    }
}

fn zeroed(model: &NetworkModel) -> NetworkModel {
    let buses = model
        .buses()
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.p_inj = 0.0;
            b.q_inj = 0.0;
            b
        })
        .collect();
    model.with_buses(buses)
}

/// Finds a solution of the power flow equations with every specified
/// injection zero. Lossless models use the constructive Kron reduction;
/// lossy models fall back to Newton-Raphson from a flat start.
pub fn zero_injection_solution(
    model: &NetworkModel,
) -> Result<ZeroInjectionSolution, PowerFlowError> {
    let sol = if model.is_lossless() {
        lossless_zero_injection(model)?
    } else {
        lossy_zero_injection(model)?
    };
    // Reconstructed PQ (and PV active) injections must vanish.
    let check = sol.installed(model);
    let (p, q) = injections(&check, &sol.state);
    let scale = model
        .buses()
        .iter()
        .map(|b| b.v_set)
        .fold(1.0_f64, f64::max)
        .powi(2);
    for (k, b) in model.buses().iter().enumerate() {
        let bad = match b.kind {
            BusKind::Pq => p[k].abs().max(q[k].abs()),
            BusKind::Pv => p[k].abs(),
            BusKind::Slack => 0.0,
        };
        if !(bad <= 1e-9 * scale) {
            return Err(PowerFlowError::NotFound(format!(
                "residual injection {bad:.3e} at bus {}",
                b.id
            )));
        }
    }
    Ok(sol)
}

fn lossless_zero_injection(
    model: &NetworkModel,
) -> Result<ZeroInjectionSolution, PowerFlowError> {
    let y = model.admittance();
    let n = model.n_buses();
    let slack = model.slack();
    let pq = model.pq();
    let pv = model.pv();
    let mut kept = vec![slack];
    kept.extend(&pv);
    let b = |i: usize, j: usize| y[(i, j)].im;

    // V_Q = −B_QQ⁻¹ B_QK V_K, and the Kron-reduced susceptance on K.
    let vk: Vec<f64> = kept.iter().map(|&k| model.buses()[k].v_set).collect();
    let (reduced, vq) = if pq.is_empty() {
        (
            Matrix::from_fn(kept.len(), kept.len(), |r, c| b(kept[r], kept[c])),
            Vec::new(),
        )
    } else {
        let bqq = Matrix::from_fn(pq.len(), pq.len(), |r, c| b(pq[r], pq[c]));
        let lu =
            Lu::factor(&bqq).map_err(|_| PowerFlowError::ZeroImpedanceAfterReduction)?;
        // Columns of B_QQ⁻¹ B_QK.
        let cols: Vec<Vec<f64>> = kept
            .iter()
            .map(|&k| lu.solve(&pq.iter().map(|&q| b(q, k)).collect::<Vec<_>>()))
            .collect();
        let reduced = Matrix::from_fn(kept.len(), kept.len(), |r, c| {
            let coupling: f64 = pq
                .iter()
                .enumerate()
                .map(|(qi, &q)| b(kept[r], q) * cols[c][qi])
                .sum();
            b(kept[r], kept[c]) - coupling
        });
        let vq: Vec<f64> = (0..pq.len())
            .map(|qi| -(0..kept.len()).map(|c| cols[c][qi] * vk[c]).sum::<f64>())
            .collect();
        (reduced, vq)
    };
    if !reduced.as_slice().iter().all(|x| x.is_finite()) {
        return Err(PowerFlowError::ZeroImpedanceAfterReduction);
    }
    // Δd = diag(V_PV)⁻¹ (−b₂ V_slack − B₃ V_PV); row 0 of `reduced` is slack.
    let mut delta_d = BTreeMap::new();
    for (r, &k) in pv.iter().enumerate() {
        let row = r + 1;
        let s: f64 = (0..kept.len()).map(|c| reduced[(row, c)] * vk[c]).sum();
        delta_d.insert(model.buses()[k].id, -s / vk[row]);
    }
    let mut v = vec![0.0; n];
    for (c, &k) in kept.iter().enumerate() {
        v[k] = vk[c];
    }
    for (qi, &k) in pq.iter().enumerate() {
        if !(vq[qi] > 0.0) {
            return Err(PowerFlowError::NotFound(format!(
                "reconstructed voltage {:.3e} at bus {} is not positive",
                vq[qi],
                model.buses()[k].id
            )));
        }
        v[k] = vq[qi];
    }
    Ok(ZeroInjectionSolution {
        state: PowerFlowState {
            v,
            delta: vec![0.0; n],
        },
        delta_d,
    })
}

fn lossy_zero_injection(model: &NetworkModel) -> Result<ZeroInjectionSolution, PowerFlowError> {
    let z = zeroed(model);
    let opts = NrOptions {
        tol: 1e-11,
        max_iter: 50,
    };
    let rep = match nr_solve(&z, &PowerFlowState::flat(&z), &opts) {
        Ok(r) => r,
        Err(e) => return Err(PowerFlowError::NotFound(e.to_string())),
    };
    let Some(state) = rep.state else {
        return Err(PowerFlowError::NotFound(format!(
            "Newton-Raphson from flat start stopped at mismatch {:.3e}",
            rep.final_mismatch
        )));
    };
    let (_, q) = injections(&z, &state);
    let delta_d = model
        .pv()
        .iter()
        .map(|&k| (model.buses()[k].id, q[k] / (state.v[k] * state.v[k])))
        .collect();
    Ok(ZeroInjectionSolution { state, delta_d })
}

/// Whether the two-bus slack/PV system with line admittance `g + jb` has a
/// zero-injection solution: `(v_pv / v_slack)² ≤ 1 + (b/g)²`.
pub fn two_bus_zero_injection_exists(g: f64, b: f64, v_pv: f64, v_slack: f64) -> bool {
    assert!(v_slack > 0.0, "slack voltage must be positive");
    assert!(g != 0.0 || b != 0.0, "line admittance must be nonzero");
    if g == 0.0 {
        return true;
    }
    let lhs = (v_pv / v_slack).powi(2);
    let rhs = 1.0 + (b / g).powi(2);
    lhs <= rhs * (1.0 + 4.0 * f64::EPSILON)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    pub nonsingular: bool,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    /// For lossless models: whether the angle block `∂P/∂δ` (slack removed)
    /// is irreducibly diagonally dominant.
    pub irreducibly_dominant: Option<bool>,
}

/// Evaluates the Jacobian at a zero-injection solution with its shunts
/// installed. Nonsingular means `σ_min > 1e-8 · σ_max`.
pub fn check_zero_injection_jacobian(
    model: &NetworkModel,
    z: &ZeroInjectionSolution,
) -> Result<JacobianCheck, PowerFlowError> {
    let installed = z.installed(model);
    let jac = jacobian(&installed, &z.state)?;
    let sv = singular_values(&jac).map_err(|e| PowerFlowError::NotFound(e.to_string()))?;
    let (min, max) = match (sv.first(), sv.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    let irreducibly_dominant = installed.is_lossless().then(|| {
        let na = installed.non_slack().len();
        irreducibly_diagonally_dominant(&Matrix::from_fn(na, na, |r, c| jac[(r, c)]))
    });
    Ok(JacobianCheck {
        nonsingular: max > 0.0 && min > 1e-8 * max,
        min_singular_value: min,
        max_singular_value: max,
        irreducibly_dominant,
    })
}

/// Weakly diagonally dominant in every row, strictly in at least one, and
/// with a strongly connected sparsity digraph.
pub fn irreducibly_diagonally_dominant(m: &Matrix) -> bool {
    let n = m.rows();
    if n == 0 {
        return false;
    }
    let tol = 1e-12 * m.max_abs();
    let mut strict = false;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        let d = m[(i, i)].abs();
        if d < off - tol {
            return false;
        }
        if d > off + tol {
            strict = true;
        }
    }
    strict && strongly_connected(n, |i, j| m[(i, j)].abs() > tol)
}

fn strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let e = if forward { edge(i, j) } else { edge(j, i) };
                if j != i && e && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Deterministic multistart lattice. Magnitudes are relative to the slack
/// setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartGrid {
    pub angles_deg: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Default for MultistartGrid {
    fn default() -> Self {
        Self {
            angles_deg: vec![-150.0, -90.0, -30.0, 0.0, 30.0, 90.0, 150.0],
            magnitudes: vec![0.2, 0.6, 1.0],
        }
    }
}

impl MultistartGrid {
    /// Evenly spaced lattice with `angles` points on (-180°, 180°] and
    /// `magnitudes` points on [0.1, 1.2].
    pub fn dense(angles: usize, magnitudes: usize) -> Self {
        Self {
            angles_deg: (0..angles)
                .map(|i| -180.0 + 360.0 * (i as f64 + 1.0) / angles as f64)
                .collect(),
            magnitudes: (0..magnitudes)
                .map(|i| 0.1 + 1.1 * i as f64 / (magnitudes.max(2) - 1) as f64)
                .collect(),
        }
    }
}

/// Largest system [`enumerate_solutions`] accepts.
pub const ENUMERATION_BUS_LIMIT: usize = 4;

/// All power flow solutions reachable by Newton-Raphson from the lattice,
/// deduplicated (state distance below 1e-6) and sorted by slack reactive
/// injection.
pub fn enumerate_solutions(
    model: &NetworkModel,
    grid: &MultistartGrid,
) -> Result<Vec<PowerFlowState>, PowerFlowError> {
    let n = model.n_buses();
    if n > ENUMERATION_BUS_LIMIT {
        return Err(PowerFlowError::GuardExceeded {
            buses: n,
            limit: ENUMERATION_BUS_LIMIT,
        });
    }
    let ns = model.non_slack();
    let pq = model.pq();
    let slack = model.slack();
    let v0 = model.buses()[slack].v_set;
    let n_starts = grid.angles_deg.len().pow(ns.len() as u32)
        * grid.magnitudes.len().pow(pq.len() as u32);
    let opts = NrOptions {
        tol: 1e-11,
        max_iter: 50,
    };
    let found: Vec<PowerFlowState> = (0..n_starts)
        .into_par_iter()
        .filter_map(|mut idx| {
            let mut s = PowerFlowState::flat(model);
            for &k in &ns {
                let a = grid.angles_deg[idx % grid.angles_deg.len()];
                idx /= grid.angles_deg.len();
                s.delta[k] = a.to_radians();
            }
            for &k in &pq {
                s.v[k] = v0 * grid.magnitudes[idx % grid.magnitudes.len()];
                idx /= grid.magnitudes.len();
            }
            nr_solve(model, &s, &opts).ok().and_then(|r| r.state)
        })
        .collect();
    let mut unique: Vec<PowerFlowState> = Vec::new();
    for s in found {
        if !unique.iter().any(|u| state_distance(u, &s) < 1e-6) {
            unique.push(s);
        }
    }
    let mut keyed: Vec<(f64, PowerFlowState)> = unique
        .into_iter()
        .map(|s| (injections(model, &s).1[slack], s))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, s)| s).collect())
}

/// Largest complex-voltage difference between two states.
pub fn state_distance(a: &PowerFlowState, b: &PowerFlowState) -> f64 {
    a.complex()
        .iter()
        .zip(b.complex())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::{builtin_case, two_bus, BuiltinCase, TwoBusParams};
    use crate::netmodel::{Branch, Bus};

    // Textbook polar power balance, written independently of `injections`.
    fn polar_injections(model: &NetworkModel, s: &PowerFlowState) -> (Vec<f64>, Vec<f64>) {
        let y = model.admittance();
        let n = model.n_buses();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                let (g, b) = (y[(i, k)].re, y[(i, k)].im);
                let th = s.delta[i] - s.delta[k];
                p[i] += s.v[i] * s.v[k] * (g * th.cos() + b * th.sin());
                q[i] += s.v[i] * s.v[k] * (g * th.sin() - b * th.cos());
            }
        }
        (p, q)
    }

    fn ieee14() -> NetworkModel {
        builtin_case(&BuiltinCase::Ieee14).unwrap()
    }

    #[test]
    fn flat_lossless_zero_mismatch() {
        let m = NetworkModel::new(
            "l",
            vec![Bus::slack(1, 1.0), Bus::pq(2, 0.0, 0.0)],
            vec![Branch::line(1, 2, 0.0, 0.1)],
        )
        .unwrap();
        let r = mismatch(&m, &PowerFlowState::flat(&m)).unwrap();
        assert!(norm_inf(&r) < 1e-14);
    }

    #[test]
    fn two_bus_residual_at_zero_angle() {
        let (g, b, vpv, vs) = (0.8, -6.0, 1.05, 0.98);
        let mut p = TwoBusParams::new(g, b, vpv, vs);
        p.p_pv = 0.3;
        let m = two_bus(&p).unwrap();
        let r = mismatch(&m, &PowerFlowState::flat(&m)).unwrap();
        let expected = g * vpv * vpv - g * vpv * vs - 0.3;
        assert!((r[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn injections_match_polar_formula() {
        let m = ieee14();
        let mut s = PowerFlowState::flat(&m);
        for k in 0..m.n_buses() {
            s.delta[k] = 0.05 * k as f64 - 0.3;
            s.v[k] = 0.9 + 0.01 * k as f64;
        }
        let (p1, q1) = injections(&m, &s);
        let (p2, q2) = polar_injections(&m, &s);
        for k in 0..m.n_buses() {
            assert!((p1[k] - p2[k]).abs() < 1e-10 && (q1[k] - q2[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = ieee14();
        let mut s = PowerFlowState::flat(&m);
        for k in 0..m.n_buses() {
            s.delta[k] = (0.37 * k as f64).sin() * 0.4;
            if m.buses()[k].kind == BusKind::Pq {
                s.v[k] = 0.95 + 0.1 * (0.71 * k as f64).cos();
            }
        }
        s.delta[m.slack()] = 0.0;
        let jac = jacobian(&m, &s).unwrap();
        let h = 1e-6;
        let nvar = jac.cols();
        for c in 0..nvar {
            let mut e = vec![0.0; nvar];
            e[c] = h;
            let mut plus = s.clone();
            apply_step(&m, &mut plus, &e, 1.0);
            let mut minus = s.clone();
            apply_step(&m, &mut minus, &e, -1.0);
            let fp = mismatch(&m, &plus).unwrap();
            let fm = mismatch(&m, &minus).unwrap();
            for r in 0..nvar {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!(
                    (fd - jac[(r, c)]).abs() <= 1e-6 * jac[(r, c)].abs().max(1.0),
                    "({r},{c}) fd {fd} analytic {}",
                    jac[(r, c)]
                );
            }
        }
    }

    #[test]
    fn ieee14_converges_from_flat_and_restarts_at_solution() {
        let m = ieee14();
        let rep = nr_solve(&m, &PowerFlowState::flat(&m), &NrOptions::default()).unwrap();
        assert!(rep.converged && rep.final_mismatch <= 1e-8);
        let s = rep.state.unwrap();
        let (p, q) = polar_injections(&m, &s);
        for &k in &m.pq() {
            assert!((p[k] - m.buses()[k].p_inj).abs() < 1e-6);
            assert!((q[k] - m.buses()[k].q_inj).abs() < 1e-6);
        }
        let again = nr_solve(&m, &s, &NrOptions::default()).unwrap();
        assert!(again.converged && again.iterations <= 1);
    }

    #[test]
    fn quadratic_voltage_scaling() {
        let m = ieee14();
        let s = nr_solve(&m, &PowerFlowState::flat(&m), &NrOptions::default())
            .unwrap()
            .state
            .unwrap();
        let (p, q) = injections(&m, &s);
        let beta = 1.7;
        let (p2, q2) = injections(&m, &s.scaled(beta));
        for k in 0..m.n_buses() {
            assert!((p2[k] - beta * beta * p[k]).abs() <= 1e-10 * p2[k].abs().max(1.0));
            assert!((q2[k] - beta * beta * q[k]).abs() <= 1e-10 * q2[k].abs().max(1.0));
        }
    }

    #[test]
    fn rectangular_round_trip() {
        let s = PowerFlowState {
            v: vec![1.0, 0.9, 1.1],
            delta: vec![0.0, -0.4, 2.0],
        };
        let back = PowerFlowState::from_rectangular(&s.rectangular());
        for k in 0..3 {
            assert!((back.v[k] - s.v[k]).abs() < 1e-12);
            assert!((back.delta[k] - s.delta[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_bus_inequality_cases() {
        assert!(two_bus_zero_injection_exists(3.0, -1.0, 1.2, 1.2));
        assert!(two_bus_zero_injection_exists(1.0, 1.0, 2f64.sqrt(), 1.0));
        assert!(!two_bus_zero_injection_exists(1.0, 0.0, 1.1, 1.0));
        assert!(two_bus_zero_injection_exists(0.0, -5.0, 3.0, 1.0));
    }

    #[test]
    fn lossless_zero_injection_has_equal_angles() {
        let m = NetworkModel::new(
            "lossless5",
            vec![
                Bus::slack(1, 1.0),
                Bus::pv(2, 0.3, 1.03),
                Bus::pq(3, -0.4, -0.1),
                Bus::pv(4, 0.1, 0.98),
                Bus::pq(5, -0.2, 0.05),
            ],
            vec![
                Branch::line(1, 2, 0.0, 0.1),
                Branch::line(2, 3, 0.0, 0.2),
                Branch::line(3, 4, 0.0, 0.15).with_charging(0.02),
                Branch::line(4, 5, 0.0, 0.3),
                Branch::line(5, 1, 0.0, 0.25),
                Branch::line(2, 5, 0.0, 0.4).with_tap(0.97, 0.0),
            ],
        )
        .unwrap();
        assert!(m.is_lossless());
        let z = zero_injection_solution(&m).unwrap();
        assert!(z.state.delta.iter().all(|&d| d == 0.0));
        let (p, q) = injections(&z.installed(&m), &z.state);
        for k in 1..5 {
            assert!(p[k].abs() < 1e-9 && q[k].abs() < 1e-9, "bus {k}");
        }
        let chk = check_zero_injection_jacobian(&m, &z).unwrap();
        assert!(chk.nonsingular);
        assert_eq!(chk.irreducibly_dominant, Some(true));
    }

    #[test]
    fn lossy_ieee14_zero_injection() {
        let m = ieee14();
        let z = zero_injection_solution(&m).unwrap();
        assert_eq!(z.delta_d.len(), 4);
        assert!(check_zero_injection_jacobian(&m, &z).unwrap().nonsingular);
    }

    #[test]
    fn high_loss_two_bus_has_no_zero_injection_solution() {
        // ratio² = 1.21 > 1 + (0.1/1)² = 1.01
        let m = two_bus(&TwoBusParams::new(1.0, -0.1, 1.1, 1.0)).unwrap();
        assert!(matches!(
            zero_injection_solution(&m),
            Err(PowerFlowError::NotFound(_))
        ));
    }

    #[test]
    fn islanded_model_has_singular_jacobian() {
        let m = NetworkModel::new_unvalidated(
            "islands",
            vec![
                Bus::slack(1, 1.0),
                Bus::pq(2, 0.0, 0.0),
                Bus::pq(3, 0.0, 0.0),
                Bus::pq(4, 0.0, 0.0),
            ],
            vec![Branch::line(1, 2, 0.0, 0.1), Branch::line(3, 4, 0.0, 0.1)],
        )
        .unwrap();
        let z = ZeroInjectionSolution {
            state: PowerFlowState::flat(&m),
            delta_d: BTreeMap::new(),
        };
        let chk = check_zero_injection_jacobian(&m, &z).unwrap();
        assert!(!chk.nonsingular);
        assert_eq!(chk.irreducibly_dominant, Some(false));
    }

    #[test]
    fn guard_rejects_large_systems() {
        assert!(matches!(
            enumerate_solutions(&ieee14(), &MultistartGrid::default()),
            Err(PowerFlowError::GuardExceeded { .. })
        ));
    }
}
