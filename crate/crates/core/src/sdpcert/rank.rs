//! Nullspace rank of the dual matrix and, on tiny systems, a check of how
//! the solution pairs disappear as the controlled voltages are lowered.

use serde::{Deserialize, Serialize};

use super::{solve_dual, SdpError, SolverOptions};
use crate::netmodel::NetworkModel;
use crate::powerflow::{
    enumerate_solutions, MultistartGrid, PowerFlowError, ENUMERATION_BUS_LIMIT,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RankStudyOptions {
    pub solver: SolverOptions,
    /// Run the disappearance check. Only allowed up to
    /// [`ENUMERATION_BUS_LIMIT`] buses.
    pub cross_check: bool,
    pub grid: MultistartGrid,
    /// Pairs vanishing within this distance of the last one count as
    /// vanishing together.
    pub scale_tol: f64,
    /// Spacing of the coarse downward scan before bisection.
    pub scan_step: f64,
}

impl Default for RankStudyOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            cross_check: false,
            grid: MultistartGrid::default(),
            scale_tol: 1e-4,
            scan_step: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCheck {
    pub solutions_at_nominal: usize,
    /// Controlled-voltage scale at which each pair disappears, highest first.
    pub pair_disappearances: Vec<f64>,
    /// Number of pairs disappearing within `scale_tol` of the last one.
    pub pairs_at_last: usize,
    pub coincident: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStudy {
    pub nullspace_rank: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub objective: f64,
    pub cross_check: Option<FoldCheck>,
}

pub fn rank_study(model: &NetworkModel, opts: &RankStudyOptions) -> Result<RankStudy, SdpError> {
    if opts.cross_check && model.n_buses() > ENUMERATION_BUS_LIMIT {
        return Err(PowerFlowError::GuardExceeded {
            buses: model.n_buses(),
            limit: ENUMERATION_BUS_LIMIT,
        }
        .into());
    }
    let sol = solve_dual(model, &opts.solver)?;
    let cross_check = if opts.cross_check {
        Some(fold_check(model, opts)?)
    } else {
        None
    };
    Ok(RankStudy {
        nullspace_rank: sol.nullspace_rank,
        eigenvalues: sol.a_eigenvalues,
        objective: sol.objective,
        cross_check,
    })
}

/// Scans the controlled-voltage scale downward from 1 until no solution is
/// left, then bisects each drop of the solution count by two.
pub fn fold_check(model: &NetworkModel, opts: &RankStudyOptions) -> Result<FoldCheck, SdpError> {
    let count = |s: f64| -> Result<usize, SdpError> {
        let scaled = model.scale_controlled_voltages(s)?;
        Ok(enumerate_solutions(&scaled, &opts.grid)?.len())
    };
    let nominal = count(1.0)?;
    let mut scan = vec![(1.0, nominal)];
    let mut s = 1.0;
    while scan.last().is_some_and(|&(_, c)| c > 0) && s > opts.scan_step {
        s -= opts.scan_step;
        scan.push((s, count(s)?));
    }

    let mut levels = Vec::new();
    let mut level = nominal - nominal % 2;
    while level >= 2 {
        levels.push(level);
        level -= 2;
    }
    let mut drops = Vec::new();
    for level in levels {
        let Some(i) = scan.windows(2).position(|w| w[0].1 >= level && w[1].1 < level) else {
            continue;
        };
        let (mut lo, mut hi) = (scan[i + 1].0, scan[i].0);
        while hi - lo > 0.01 * opts.scale_tol {
            let mid = 0.5 * (lo + hi);
            if count(mid)? >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        drops.push(0.5 * (lo + hi));
    }

    let pairs_at_last = drops
        .last()
        .map(|&last| drops.iter().filter(|&&d| d - last <= opts.scale_tol).count())
        .unwrap_or(0);
    Ok(FoldCheck {
        solutions_at_nominal: nominal,
        pair_disappearances: drops,
        pairs_at_last,
        coincident: pairs_at_last >= 2,
    })
}
