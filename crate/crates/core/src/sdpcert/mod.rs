//! The insolvability certificate: a dual semidefinite program whose optimal
//! value bounds the squared slack voltage needed to realize the specified
//! injections from below.
//!
//! If that bound exceeds the specified slack voltage, no power flow solution
//! exists. Otherwise the ratio of the two gives a controlled-voltage margin
//! `σ`, and `η = σ²` is the matching uniform injection margin.

pub mod matrices;
pub mod rank;
pub mod solver;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eigvals_sym, LinalgError, SymMatrix};
use crate::netmodel::{NetworkError, NetworkModel};
use crate::powerflow::{nr_solve, NrOptions, PowerFlowError, PowerFlowState};

pub use matrices::{assemble_lmi, build_matrices, pv_ratio_stamp, ConstraintMatrices, DualPoint, Stamp};
pub use rank::{fold_check, rank_study, FoldCheck, RankStudy, RankStudyOptions};
pub use solver::{solve, SdpProblem, SdpResult, SdpStatus, SolverOptions};

/// Eigenvalues of `A` at or below this fraction of the largest one count
/// toward the nullspace.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("multipliers must be positive and ascending (offending value {0})")]
    InvalidMultipliers(f64),
}

/// Which model positions each dual variable belongs to, in the order used
/// by [`dual_problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualLayout {
    pub lambda: Vec<usize>,
    pub gamma: Vec<usize>,
    pub mu: Vec<usize>,
}

impl DualLayout {
    pub fn point(&self, model: &NetworkModel, y: &[f64]) -> DualPoint {
        let id = |k: usize| model.buses()[k].id;
        let nl = self.lambda.len();
        let ng = self.gamma.len();
        DualPoint {
            lambda: self.lambda.iter().enumerate().map(|(i, &k)| (id(k), y[i])).collect(),
            gamma: self.gamma.iter().enumerate().map(|(i, &k)| (id(k), y[nl + i])).collect(),
            mu: self.mu.iter().enumerate().map(|(i, &k)| (id(k), y[nl + ng + i])).collect(),
        }
    }
}

/// The dual as an [`SdpProblem`]: `C = M_slack`, one constraint per
/// multiplier, objective weights `(P, Q, 0)`.
pub fn dual_problem(model: &NetworkModel) -> Result<(SdpProblem, DualLayout), NetworkError> {
    let mats = build_matrices(model);
    let alphas = model.alpha_ratios()?;
    let layout = DualLayout {
        lambda: model.non_slack(),
        gamma: model.pq(),
        mu: model.pv(),
    };
    let buses = model.buses();
    let mut cons = Vec::new();
    let mut b = Vec::new();
    for &k in &layout.lambda {
        cons.push(mats.y[k].clone());
        b.push(buses[k].p_inj);
    }
    for &k in &layout.gamma {
        cons.push(mats.ybar[k].clone());
        b.push(buses[k].q_inj);
    }
    for &k in &layout.mu {
        cons.push(pv_ratio_stamp(&mats, k, alphas[&buses[k].id]));
        b.push(0.0);
    }
    Ok((SdpProblem::new(mats.m_slack().to_dense(), cons, b), layout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub point: DualPoint,
    pub objective: f64,
    #[serde(skip)]
    pub a_matrix: Option<SymMatrix>,
    /// Ascending.
    pub a_eigenvalues: Vec<f64>,
    pub nullspace_rank: usize,
    pub status: SdpStatus,
    pub outer_iterations: usize,
    pub newton_steps: usize,
}

/// Number of eigenvalues at or below `tol · max eigenvalue`.
pub fn nullspace_rank(eigenvalues: &[f64], tol: f64) -> usize {
    let max = eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    eigenvalues.iter().filter(|&&w| w <= tol * max).count()
}

pub fn solve_dual(model: &NetworkModel, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    let (problem, layout) = dual_problem(model)?;
    Ok(finish(model, &layout, solve(&problem, opts))?)
}

fn finish(
    model: &NetworkModel,
    layout: &DualLayout,
    r: SdpResult,
) -> Result<SdpSolution, LinalgError> {
    let eig = eigvals_sym(&r.a)?;
    Ok(SdpSolution {
        point: layout.point(model, &r.y),
        objective: r.objective,
        nullspace_rank: nullspace_rank(&eig, RANK_TOL),
        a_eigenvalues: eig,
        a_matrix: Some(r.a),
        status: r.status,
        outer_iterations: r.outer_iterations,
        newton_steps: r.newton_steps,
    })
}

/// `sqrt(max(objective, 0))`: the dual value bounds the squared slack
/// voltage.
pub fn v_slack_lower_bound(sol: &SdpSolution) -> f64 {
    sol.objective.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The bound exceeds the specified slack voltage.
    Insolvable,
    /// The test is passed; a solution may or may not exist.
    NotCertified,
    /// The solver failed; no conclusion is drawn.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub v_lower: f64,
    pub v0: f64,
    pub insolvable_certified: bool,
    pub sigma: f64,
    pub eta: f64,
    pub nullspace_rank: usize,
    /// `σ ≥ 1` and a nullspace of rank at most two.
    pub solution_indicator: bool,
    pub verdict: Verdict,
    pub objective: f64,
    pub status: SdpStatus,
    pub a_eigenvalues: Vec<f64>,
}

impl CertificateResult {
    pub fn from_solution(model: &NetworkModel, sol: &SdpSolution) -> Self {
        let v0 = model.buses()[model.slack()].v_set;
        let v_lower = v_slack_lower_bound(sol);
        let sigma = v0 / v_lower;
        let eta = sigma * sigma;
        let usable = sol.status != SdpStatus::NumericalTrouble;
        let insolvable_certified = usable && v_lower > v0;
        let verdict = if !usable {
            Verdict::Inconclusive
        } else if insolvable_certified {
            Verdict::Insolvable
        } else {
            Verdict::NotCertified
        };
        Self {
            v_lower,
            v0,
            insolvable_certified,
            sigma,
            eta,
            nullspace_rank: sol.nullspace_rank,
            solution_indicator: usable && sigma >= 1.0 && sol.nullspace_rank <= 2,
            verdict,
            objective: sol.objective,
            status: sol.status,
            a_eigenvalues: sol.a_eigenvalues.clone(),
        }
    }
}

pub fn certify(model: &NetworkModel) -> Result<CertificateResult, SdpError> {
    certify_with(model, &SolverOptions::default())
}

pub fn certify_with(
    model: &NetworkModel,
    opts: &SolverOptions,
) -> Result<CertificateResult, SdpError> {
    let sol = solve_dual(model, opts)?;
    Ok(CertificateResult::from_solution(model, &sol))
}

/// `η` after scaling the model's injections by `multiplier`.
pub fn injection_margin_at(
    model: &NetworkModel,
    multiplier: f64,
    opts: &SolverOptions,
) -> Result<f64, SdpError> {
    Ok(certify_with(&model.scale_injections(multiplier)?, opts)?.eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub with_nr: bool,
    pub nr: NrOptions,
    pub solver: SolverOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            with_nr: false,
            nr: NrOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub multiplier: f64,
    /// Absent when the sweep ran without Newton-Raphson.
    pub nr_converged: Option<bool>,
    pub certificate: Option<CertificateResult>,
    pub error: Option<String>,
}

/// Scales the injections to each multiplier and certifies. With `with_nr`,
/// Newton-Raphson runs along the list, each solve starting from the last
/// converged solution (flat start for the first). Certificates are solved in
/// parallel; rows come back in input order.
pub fn sweep(
    model: &NetworkModel,
    multipliers: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>, SdpError> {
    let mut prev = 0.0;
    for &m in multipliers {
        if !(m > 0.0) || !m.is_finite() || m < prev {
            return Err(SdpError::InvalidMultipliers(m));
        }
        prev = m;
    }
    let nr: Vec<Option<bool>> = if opts.with_nr {
        let mut warm = PowerFlowState::flat(model);
        multipliers
            .iter()
            .map(|&m| {
                let scaled = model.scale_injections(m).ok()?;
                let converged = match nr_solve(&scaled, &warm, &opts.nr) {
                    Ok(rep) => match rep.state {
                        Some(s) => {
                            warm = s;
                            true
                        }
                        None => false,
                    },
                    Err(_) => false,
                };
                Some(converged)
            })
            .collect()
    } else {
        vec![None; multipliers.len()]
    };
    Ok(multipliers
        .par_iter()
        .zip(nr)
        .map(|(&m, nr_converged)| {
            let result = model
                .scale_injections(m)
                .map_err(SdpError::from)
                .and_then(|scaled| certify_with(&scaled, &opts.solver));
            match result {
                Ok(c) => SweepRow {
                    multiplier: m,
                    nr_converged,
                    certificate: Some(c),
                    error: None,
                },
                Err(e) => SweepRow {
                    multiplier: m,
                    nr_converged,
                    certificate: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
