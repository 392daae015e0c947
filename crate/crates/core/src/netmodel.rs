//! Bus/branch network model and nodal admittance matrix.
//!
//! All quantities are per-unit. Injections are signed net values
//! (generation minus load); angles are radians.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::{Index, IndexMut};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no slack bus")]
    NoSlack,
    #[error("network has more than one slack bus: {0:?}")]
    MultipleSlack(Vec<usize>),
    #[error("bus {bus}: voltage setpoint must be positive, got {value}")]
    InvalidSetpoint { bus: usize, value: f64 },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("branch references unknown bus {0}")]
    UnknownBus(usize),
    #[error("branch {from}-{to} has zero series impedance")]
    ZeroImpedanceBranch { from: usize, to: usize },
    #[error("branch {from}-{to}: {reason}")]
    InvalidBranch {
        from: usize,
        to: usize,
        reason: String,
    },
    #[error("network is disconnected; islands: {components:?}")]
    DisconnectedNetwork { components: Vec<Vec<usize>> },
    #[error("scaling factor must be positive, got {0}")]
    NonPositiveScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Net active injection.
    pub p_inj: f64,
    /// Net reactive injection; only enforced at PQ buses.
    pub q_inj: f64,
    /// Voltage magnitude setpoint for PV and slack buses.
    pub v_set: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
}

impl Bus {
    pub fn pq(id: usize, p_inj: f64, q_inj: f64) -> Self {
        Self {
            id,
            kind: BusKind::Pq,
            p_inj,
            q_inj,
            v_set: 1.0,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }

    pub fn pv(id: usize, p_inj: f64, v_set: f64) -> Self {
        Self {
            id,
            kind: BusKind::Pv,
            p_inj,
            q_inj: 0.0,
            v_set,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }

    pub fn slack(id: usize, v_set: f64) -> Self {
        Self {
            id,
            kind: BusKind::Slack,
            p_inj: 0.0,
            q_inj: 0.0,
            v_set,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }

    pub fn with_shunt(mut self, g: f64, b: f64) -> Self {
        self.shunt_g = g;
        self.shunt_b = b;
        self
    }
}

/// π-model branch. `tap` is the off-nominal ratio at the `from` end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub tap: f64,
    pub phase_shift: f64,
}

impl Branch {
    pub fn line(from: usize, to: usize, r: f64, x: f64) -> Self {
        Self {
            from,
            to,
            r,
            x,
            b_charging: 0.0,
            tap: 1.0,
            phase_shift: 0.0,
        }
    }

    /// Line whose series admittance is `g + jb`.
    pub fn from_admittance(from: usize, to: usize, g: f64, b: f64) -> Self {
        let z = Complex64::new(g, b).inv();
        Self::line(from, to, z.re, z.im)
    }

    pub fn with_charging(mut self, b: f64) -> Self {
        self.b_charging = b;
        self
    }

    pub fn with_tap(mut self, tap: f64, phase_shift: f64) -> Self {
        self.tap = tap;
        self.phase_shift = phase_shift;
        self
    }

    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }
}

/// Dense complex `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// A validated (or explicitly unvalidated) network.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    name: String,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    position: HashMap<usize, usize>,
    y: OnceLock<ComplexMatrix>,
}

impl PartialEq for NetworkModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.buses == other.buses && self.branches == other.branches
    }
}

impl NetworkModel {
    /// Builds and validates a model: unique ids, exactly one slack, positive
    /// setpoints, well-formed branches and a connected topology.
    pub fn new(
        name: impl Into<String>,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
    ) -> Result<Self, NetworkError> {
        let model = Self::new_unvalidated(name, buses, branches)?;
        model.validate()?;
        Ok(model)
    }

    /// Builds a model checking only that ids are unique and branches refer to
    /// existing buses. Slack count, setpoints and connectivity are not
    /// checked; intended for experiments on deliberately broken networks.
    pub fn new_unvalidated(
        name: impl Into<String>,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
    ) -> Result<Self, NetworkError> {
        let mut position = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if position.insert(b.id, i).is_some() {
                return Err(NetworkError::DuplicateBus(b.id));
            }
        }
        for br in &branches {
            for id in [br.from, br.to] {
                if !position.contains_key(&id) {
                    return Err(NetworkError::UnknownBus(id));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            buses,
            branches,
            position,
            y: OnceLock::new(),
        })
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let slacks: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            0 => return Err(NetworkError::NoSlack),
            1 => {}
            _ => return Err(NetworkError::MultipleSlack(slacks)),
        }
        for b in &self.buses {
            if b.kind != BusKind::Pq && !(b.v_set > 0.0 && b.v_set.is_finite()) {
                return Err(NetworkError::InvalidSetpoint {
                    bus: b.id,
                    value: b.v_set,
                });
            }
        }
        for br in &self.branches {
            if br.r == 0.0 && br.x == 0.0 {
                return Err(NetworkError::ZeroImpedanceBranch {
                    from: br.from,
                    to: br.to,
                });
            }
            if br.r < 0.0 {
                return Err(NetworkError::InvalidBranch {
                    from: br.from,
                    to: br.to,
                    reason: format!("negative resistance {}", br.r),
                });
            }
            if !(br.tap > 0.0) {
                return Err(NetworkError::InvalidBranch {
                    from: br.from,
                    to: br.to,
                    reason: format!("tap ratio must be positive, got {}", br.tap),
                });
            }
        }
        let components = self.components();
        if components.len() > 1 {
            return Err(NetworkError::DisconnectedNetwork { components });
        }
        Ok(())
    }

    /// Connected components as lists of bus ids (breadth-first over branches).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (a, b) = (self.position[&br.from], self.position[&br.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(self.buses[u].id);
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in [`Self::buses`].
    pub fn position(&self, id: usize) -> Option<usize> {
        self.position.get(&id).copied()
    }

    /// Position of the slack bus.
    ///
    /// # Panics
    /// On models built with [`Self::new_unvalidated`] that have no slack bus.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("model has no slack bus")
    }

    pub fn positions_of(&self, kind: BusKind) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn pq(&self) -> Vec<usize> {
        self.positions_of(BusKind::Pq)
    }

    pub fn pv(&self) -> Vec<usize> {
        self.positions_of(BusKind::Pv)
    }

    /// Positions of all PV and PQ buses in bus order.
    pub fn non_slack(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BusKind::Slack)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when every series resistance and shunt conductance is zero and no
    /// branch carries a phase shift, so `Y` is purely imaginary.
    pub fn is_lossless(&self) -> bool {
        self.branches.iter().all(|b| b.r == 0.0 && b.phase_shift == 0.0)
            && self.buses.iter().all(|b| b.shunt_g == 0.0)
    }

    /// Nodal admittance matrix `Y = G + jB`, built once and cached.
    pub fn admittance(&self) -> &ComplexMatrix {
        self.y.get_or_init(|| build_admittance(self))
    }

    /// Copy with injections multiplied: P and Q at PQ buses, P at PV buses.
    pub fn scale_injections(&self, multiplier: f64) -> Result<NetworkModel, NetworkError> {
        if !(multiplier > 0.0) || !multiplier.is_finite() {
            return Err(NetworkError::NonPositiveScale(multiplier));
        }
        let buses = self
            .buses
            .iter()
            .map(|b| {
                let mut b = b.clone();
                match b.kind {
                    BusKind::Pq => {
                        b.p_inj *= multiplier;
                        b.q_inj *= multiplier;
                    }
                    BusKind::Pv => b.p_inj *= multiplier,
                    BusKind::Slack => {}
                }
                b
            })
            .collect();
        Ok(self.with_buses(buses))
    }

    /// Copy with slack and PV voltage setpoints multiplied by `factor`.
    pub fn scale_controlled_voltages(&self, factor: f64) -> Result<NetworkModel, NetworkError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(NetworkError::NonPositiveScale(factor));
        }
        let buses = self
            .buses
            .iter()
            .map(|b| {
                let mut b = b.clone();
                if b.kind != BusKind::Pq {
                    b.v_set *= factor;
                }
                b
            })
            .collect();
        Ok(self.with_buses(buses))
    }

    /// Same topology with replaced bus data (ids and order must match).
    pub fn with_buses(&self, buses: Vec<Bus>) -> NetworkModel {
        assert_eq!(buses.len(), self.buses.len());
        Self {
            name: self.name.clone(),
            buses,
            branches: self.branches.clone(),
            position: self.position.clone(),
            y: OnceLock::new(),
        }
    }

    /// `v_set_k / v_set_slack` for every PV bus, keyed by bus id.
    pub fn alpha_ratios(&self) -> Result<BTreeMap<usize, f64>, NetworkError> {
        let slack = self
            .buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .ok_or(NetworkError::NoSlack)?;
        check_setpoint(slack)?;
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Pv)
            .map(|b| {
                check_setpoint(b)?;
                Ok((b.id, b.v_set / slack.v_set))
            })
            .collect()
    }
}

fn check_setpoint(b: &Bus) -> Result<(), NetworkError> {
    if b.v_set > 0.0 && b.v_set.is_finite() {
        Ok(())
    } else {
        Err(NetworkError::InvalidSetpoint {
            bus: b.id,
            value: b.v_set,
        })
    }
}

/// Standard π-model stamps. With `t = tap·e^{jφ}` on the from side:
/// `Y_ff += (y + jb/2)/tap²`, `Y_tt += y + jb/2`, `Y_ft -= y/conj(t)`,
/// `Y_tf -= y/t`; bus shunts go on the diagonal.
pub fn build_admittance(model: &NetworkModel) -> ComplexMatrix {
    let n = model.n_buses();
    let mut y = ComplexMatrix::zeros(n);
    for br in model.branches() {
        let f = model.position(br.from).expect("validated branch");
        let t = model.position(br.to).expect("validated branch");
        let ys = br.series_admittance();
        let half_b = Complex64::new(0.0, br.b_charging / 2.0);
        let ratio = Complex64::from_polar(br.tap, br.phase_shift);
        y[(f, f)] += (ys + half_b) / (br.tap * br.tap);
        y[(t, t)] += ys + half_b;
        y[(f, t)] -= ys / ratio.conj();
        y[(t, f)] -= ys / ratio;
    }
    for (i, b) in model.buses().iter().enumerate() {
        y[(i, i)] += Complex64::new(b.shunt_g, b.shunt_b);
    }
    y
}
