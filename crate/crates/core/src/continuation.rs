//! Continuation power flow: traces the solution voltage against a uniform
//! injection multiplier through the nose and down the lower branch.
//!
//! The multiplier is an extra unknown, closed by a pseudo-arclength
//! equation, so the Jacobian of the augmented system stays nonsingular at
//! the nose.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caseio::default_monitored_bus;
use crate::linalg::{norm2, norm_inf, Lu, Matrix};
use crate::netmodel::{BusKind, NetworkError, NetworkModel};
use crate::powerflow::{jacobian, mismatch, nr_solve, NrOptions, PowerFlowError, PowerFlowState};

/// Copy of `model` with the slack and every PV voltage setpoint multiplied
/// by `factor`.
pub fn scale_controlled_voltages(
    model: &NetworkModel,
    factor: f64,
) -> Result<NetworkModel, NetworkError> {
    model.scale_controlled_voltages(factor)
}

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("no power flow solution at the starting multiplier {0}")]
    BaseCaseUnsolvable(f64),
    #[error("bus {0} is not a PQ bus of this model")]
    BadMonitoredBus(usize),
    #[error("model has no PQ bus to monitor")]
    NoPqBus,
    #[error("invalid continuation options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpfOptions {
    /// Initial arclength step.
    pub step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_points: usize,
    /// Bus id; defaults to [`default_monitored_bus`].
    pub monitored_bus: Option<usize>,
    /// Multiplier at which tracing starts.
    pub start_multiplier: f64,
    /// Arclength resolution of the nose bisection.
    pub nose_tol: f64,
    /// Tracing stops once the lower branch falls below this fraction of the
    /// nose multiplier.
    pub lower_fraction: f64,
    pub corrector_tol: f64,
}

impl Default for CpfOptions {
    fn default() -> Self {
        Self {
            step: 0.1,
            min_step: 1e-6,
            max_step: 0.5,
            max_points: 2000,
            monitored_bus: None,
            start_multiplier: 0.0,
            nose_tol: 1e-4,
            lower_fraction: 0.1,
            corrector_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Upper,
    Lower,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Upper => "upper",
            Branch::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub multiplier: f64,
    pub v_monitored: f64,
    pub branch: Branch,
    pub state: PowerFlowState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationTrace {
    pub points: Vec<CurvePoint>,
    pub nose_multiplier: f64,
    pub monitored_bus: usize,
    /// The step fell below `min_step` before tracing finished; the trace
    /// holds everything computed up to that point.
    pub step_underflow: bool,
    /// The nose was passed and located.
    pub nose_found: bool,
}

/// Copy of `model` with every specified injection multiplied by
/// `multiplier`, zero allowed.
fn at_multiplier(model: &NetworkModel, multiplier: f64) -> NetworkModel {
    let buses = model
        .buses()
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.p_inj *= multiplier;
            b.q_inj *= multiplier;
            b
        })
        .collect();
    model.with_buses(buses)
}

/// Augmented point: power flow unknowns followed by the multiplier.
struct Tracer<'a> {
    model: &'a NetworkModel,
    spec: Vec<f64>,
    ns: Vec<usize>,
    pq: Vec<usize>,
    template: PowerFlowState,
    tol: f64,
}

impl<'a> Tracer<'a> {
    fn new(model: &'a NetworkModel, base: PowerFlowState, tol: f64) -> Self {
        let buses = model.buses();
        let ns = model.non_slack();
        let pq = model.pq();
        let mut spec: Vec<f64> = ns.iter().map(|&k| buses[k].p_inj).collect();
        spec.extend(pq.iter().map(|&k| buses[k].q_inj));
        Self {
            model,
            spec,
            ns,
            pq,
            template: base,
            tol,
        }
    }

    fn dim(&self) -> usize {
        self.spec.len() + 1
    }

    fn pack(&self, s: &PowerFlowState, lambda: f64) -> Vec<f64> {
        let mut u: Vec<f64> = self.ns.iter().map(|&k| s.delta[k]).collect();
        u.extend(self.pq.iter().map(|&k| s.v[k]));
        u.push(lambda);
        u
    }

    fn state(&self, u: &[f64]) -> PowerFlowState {
        let mut s = self.template.clone();
        for (i, &k) in self.ns.iter().enumerate() {
            s.delta[k] = u[i];
        }
        for (i, &k) in self.pq.iter().enumerate() {
            s.v[k] = u[self.ns.len() + i];
        }
        s
    }

    /// `F(x, λ) = calc(x) − λ·spec`.
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>, PowerFlowError> {
        let lambda = u[u.len() - 1];
        let mut f = mismatch(self.model, &self.state(u))?;
        for (fi, si) in f.iter_mut().zip(&self.spec) {
            *fi += (1.0 - lambda) * si;
        }
        Ok(f)
    }

    /// `[J, −spec; tᵀ]`.
    fn augmented(&self, u: &[f64], t: &[f64]) -> Result<Matrix, PowerFlowError> {
        let j = jacobian(self.model, &self.state(u))?;
        let m = self.spec.len();
        Ok(Matrix::from_fn(m + 1, m + 1, |r, c| {
            if r == m {
                t[c]
            } else if c == m {
                -self.spec[r]
            } else {
                j[(r, c)]
            }
        }))
    }

    /// Unit tangent oriented along `prev`.
    fn tangent(&self, u: &[f64], prev: &[f64]) -> Option<Vec<f64>> {
        let a = self.augmented(u, prev).ok()?;
        let mut rhs = vec![0.0; self.dim()];
        rhs[self.dim() - 1] = 1.0;
        let t = Lu::factor(&a).ok()?.solve(&rhs);
        let n = norm2(&t);
        n.is_finite().then(|| t.iter().map(|x| x / n).collect())
    }

    /// Newton on `F(u) = 0, tᵀ(u − u_p) = 0` from the predictor `u_p`.
    /// Returns the corrected point and the iteration count.
    fn correct(&self, up: &[f64], t: &[f64]) -> Option<(Vec<f64>, usize)> {
        let mut u = up.to_vec();
        for it in 0..12 {
            let mut r = self.residual(&u).ok()?;
            let err = norm_inf(&r);
            if !err.is_finite() || err > 1e6 {
                return None;
            }
            if err <= self.tol {
                return Some((u, it));
            }
            r.push(t.iter().zip(u.iter().zip(up)).map(|(ti, (a, b))| ti * (a - b)).sum());
            let a = self.augmented(&u, t).ok()?;
            let du = Lu::factor(&a).ok()?.solve(&r);
            for (ui, d) in u.iter_mut().zip(du) {
                *ui -= d;
            }
        }
        let err = norm_inf(&self.residual(&u).ok()?);
        (err <= self.tol).then_some((u, 12))
    }

    /// Predictor-corrector step of arclength `h`, with the tangent at the
    /// new point.
    fn step(&self, u: &[f64], t: &[f64], h: f64) -> Option<(Vec<f64>, Vec<f64>, usize)> {
        let up: Vec<f64> = u.iter().zip(t).map(|(a, b)| a + h * b).collect();
        let (un, iters) = self.correct(&up, t)?;
        let tn = self.tangent(&un, t)?;
        Some((un, tn, iters))
    }
}

pub fn trace_pv_curve(
    model: &NetworkModel,
    opts: &CpfOptions,
) -> Result<ContinuationTrace, ContinuationError> {
    if !(opts.step > 0.0 && opts.min_step > 0.0 && opts.min_step <= opts.step)
        || !(opts.max_step >= opts.step)
        || !(opts.start_multiplier >= 0.0)
    {
        return Err(ContinuationError::InvalidOptions(format!("{opts:?}")));
    }
    let monitored_bus = match opts.monitored_bus {
        Some(id) => id,
        None => default_monitored_bus(model).ok_or(ContinuationError::NoPqBus)?,
    };
    let mon = model
        .position(monitored_bus)
        .filter(|&p| model.buses()[p].kind == BusKind::Pq)
        .ok_or(ContinuationError::BadMonitoredBus(monitored_bus))?;

    let start = at_multiplier(model, opts.start_multiplier);
    let nr = NrOptions {
        tol: opts.corrector_tol,
        ..NrOptions::default()
    };
    let base = nr_solve(&start, &PowerFlowState::flat(&start), &nr)?
        .state
        .ok_or(ContinuationError::BaseCaseUnsolvable(opts.start_multiplier))?;

    let tr = Tracer::new(model, base.clone(), opts.corrector_tol);
    let lambda_at = |u: &[f64]| u[u.len() - 1];
    let point = |u: &[f64], branch: Branch| {
        let state = tr.state(u);
        CurvePoint {
            multiplier: lambda_at(u),
            v_monitored: state.v[mon],
            branch,
            state,
        }
    };

    let mut e = vec![0.0; tr.dim()];
    e[tr.dim() - 1] = 1.0;
    let mut u = tr.pack(&base, opts.start_multiplier);
    let mut t = tr
        .tangent(&u, &e)
        .ok_or(ContinuationError::BaseCaseUnsolvable(opts.start_multiplier))?;
    let mut points = vec![point(&u, Branch::Upper)];
    let mut branch = Branch::Upper;
    let mut nose = lambda_at(&u);
    let mut nose_found = false;
    let mut step_underflow = false;
    let mut h = opts.step;

    while points.len() < opts.max_points {
        let Some((un, tn, iters)) = tr.step(&u, &t, h) else {
            h *= 0.5;
            if h < opts.min_step {
                step_underflow = true;
                break;
            }
            continue;
        };
        let lam_dir = t[t.len() - 1];
        let new_dir = tn[tn.len() - 1];
        if branch == Branch::Upper && lam_dir > 0.0 && new_dir <= 0.0 {
            // Nose inside this step: bisect the arclength.
            let (mut lo, mut hi) = (0.0, h);
            let mut best = (u.clone(), lambda_at(&u));
            while hi - lo > opts.nose_tol {
                let mid = 0.5 * (lo + hi);
                match tr.step(&u, &t, mid) {
                    Some((um, tm, _)) => {
                        if lambda_at(&um) > best.1 {
                            best = (um.clone(), lambda_at(&um));
                        }
                        if tm[tm.len() - 1] > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    None => break,
                }
            }
            if lambda_at(&un) > best.1 {
                best = (un.clone(), lambda_at(&un));
            }
            nose = nose.max(best.1);
            points.push(point(&best.0, Branch::Upper));
            branch = Branch::Lower;
            nose_found = true;
        } else if branch == Branch::Lower && new_dir > 0.0 {
            // Turned upward again on the lower branch.
            break;
        }
        nose = nose.max(lambda_at(&un));
        points.push(point(&un, branch));
        u = un;
        t = tn;
        if iters <= 3 {
            h = (h * 1.5).min(opts.max_step);
        }
        let lam = lambda_at(&u);
        if branch == Branch::Lower && (lam < opts.lower_fraction * nose || lam <= 0.0) {
            break;
        }
    }

    Ok(ContinuationTrace {
        points,
        nose_multiplier: nose,
        monitored_bus,
        step_underflow,
        nose_found,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::{builtin_case, two_bus, BuiltinCase, TwoBusParams};

    #[test]
    fn two_bus_nose_matches_closed_form() {
        // Lossless line, PQ load P + j0 at bus 1: nose at P = V0² / (2x).
        let m = two_bus(&TwoBusParams::new(0.0, -10.0, 1.0, 1.0)).unwrap();
        let pq_model = m.with_buses(
            m.buses()
                .iter()
                .map(|b| {
                    let mut b = b.clone();
                    if b.kind == BusKind::Pv {
                        b.kind = BusKind::Pq;
                        b.p_inj = -1.0;
                        b.q_inj = 0.0;
                    }
                    b
                })
                .collect(),
        );
        let tr = trace_pv_curve(&pq_model, &CpfOptions::default()).unwrap();
        assert!(tr.nose_found);
        assert!((tr.nose_multiplier - 5.0).abs() < 1e-6, "{}", tr.nose_multiplier);
    }

    #[test]
    fn points_satisfy_mismatch() {
        let m = builtin_case(&BuiltinCase::Ieee14).unwrap();
        let tr = trace_pv_curve(&m, &CpfOptions::default()).unwrap();
        assert!(tr.nose_found);
        for p in &tr.points {
            let scaled = at_multiplier(&m, p.multiplier);
            let r = mismatch(&scaled, &p.state).unwrap();
            assert!(norm_inf(&r) <= 1e-6);
        }
        let lambdas: Vec<f64> = tr.points.iter().map(|p| p.multiplier).collect();
        let top = lambdas
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(lambdas[..=top].windows(2).all(|w| w[1] >= w[0]));
        assert!(lambdas[top..].windows(2).all(|w| w[1] <= w[0]));
        assert!(tr.points.last().unwrap().multiplier < 0.1 * tr.nose_multiplier);
    }
}
