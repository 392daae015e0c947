//! Real `2n x 2n` quadratic-form matrices for bus injections and squared
//! voltage magnitudes, in the rectangular coordinates `x = (Re V, Im V)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linalg::SymMatrix;
use crate::netmodel::{NetworkError, NetworkModel};

/// Symmetric matrix that is zero outside the rows/columns in `idx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamp {
    /// Sorted, distinct indices into the full dimension.
    pub idx: Vec<usize>,
    /// Dense `idx.len() x idx.len()` block, row-major, symmetric.
    pub block: Vec<f64>,
    pub dim: usize,
}

impl Stamp {
    pub fn from_dense(m: &SymMatrix) -> Self {
        let n = m.n();
        let idx: Vec<usize> = (0..n)
            .filter(|&i| (0..n).any(|j| m.get(i, j) != 0.0))
            .collect();
        let k = idx.len();
        let mut block = vec![0.0; k * k];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                block[a * k + b] = m.get(i, j);
            }
        }
        Self { idx, block, dim: n }
    }

    pub fn identity(dim: usize) -> Self {
        let mut block = vec![0.0; dim * dim];
        for i in 0..dim {
            block[i * dim + i] = 1.0;
        }
        Self {
            idx: (0..dim).collect(),
            block,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.block[a * self.idx.len() + b]
    }

    pub fn to_dense(&self) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.dim);
        self.add_into(&mut m, 1.0);
        m
    }

    /// `m += alpha * self`.
    pub fn add_into(&self, m: &mut SymMatrix, alpha: f64) {
        let k = self.idx.len();
        for a in 0..k {
            for b in a..k {
                let v = alpha * self.block[a * k + b];
                if v != 0.0 {
                    m.add_at(self.idx[a], self.idx[b], v);
                }
            }
        }
    }

    /// `xᵀ S x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let k = self.idx.len();
        let mut s = 0.0;
        for a in 0..k {
            let xa = x[self.idx[a]];
            for b in 0..k {
                s += xa * self.block[a * k + b] * x[self.idx[b]];
            }
        }
        s
    }

    /// `alpha * self + beta * other` on the union of supports.
    pub fn combine(&self, alpha: f64, other: &Stamp, beta: f64) -> Stamp {
        assert_eq!(self.dim, other.dim);
        let mut idx: Vec<usize> = self.idx.iter().chain(&other.idx).copied().collect();
        idx.sort_unstable();
        idx.dedup();
        let k = idx.len();
        let pos = |i: usize| idx.binary_search(&i).unwrap();
        let mut block = vec![0.0; k * k];
        for (s, w) in [(self, alpha), (other, beta)] {
            let p: Vec<usize> = s.idx.iter().map(|&i| pos(i)).collect();
            for a in 0..s.len() {
                for b in 0..s.len() {
                    block[p[a] * k + p[b]] += w * s.at(a, b);
                }
            }
        }
        Stamp {
            idx,
            block,
            dim: self.dim,
        }
    }
}

/// Per-bus `Y_k`, `Ȳ_k`, `M_k` (indexed by model position) and the slack
/// voltage matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrices {
    pub n: usize,
    pub slack: usize,
    pub y: Vec<Stamp>,
    pub ybar: Vec<Stamp>,
    pub m: Vec<Stamp>,
}

impl ConstraintMatrices {
    pub fn m_slack(&self) -> &Stamp {
        &self.m[self.slack]
    }
}

/// Builds the matrices with `Y_k = e_k e_kᵀ Y`:
///
/// `Y_k  =  ½ [[Re(Y_k+Y_kᵀ), Im(Y_kᵀ−Y_k)], [Im(Y_k−Y_kᵀ), Re(Y_k+Y_kᵀ)]]`,
/// `Ȳ_k  = −½ [[Im(Y_k+Y_kᵀ), Re(Y_k−Y_kᵀ)], [Re(Y_kᵀ−Y_k), Im(Y_k+Y_kᵀ)]]`,
/// `M_k  = blockdiag(e_k e_kᵀ, e_k e_kᵀ)`.
pub fn build_matrices(model: &NetworkModel) -> ConstraintMatrices {
    let n = model.n_buses();
    let yc = model.admittance();
    let mut y = Vec::with_capacity(n);
    let mut ybar = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for k in 0..n {
        let mut nodes: Vec<usize> = (0..n)
            .filter(|&j| j == k || yc[(k, j)].norm() != 0.0)
            .collect();
        nodes.sort_unstable();
        let s = nodes.len();
        let idx: Vec<usize> = nodes.iter().copied().chain(nodes.iter().map(|j| j + n)).collect();
        let kk = 2 * s;
        let mut by = vec![0.0; kk * kk];
        let mut bq = vec![0.0; kk * kk];
        // (Y_k)_{ij} is Y[k][j] when i == k, else 0.
        let yk = |i: usize, j: usize| {
            if i == k {
                yc[(k, j)]
            } else {
                num_complex::Complex64::new(0.0, 0.0)
            }
        };
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                let sum = yk(i, j) + yk(j, i);
                let diff = yk(i, j) - yk(j, i);
                // Y_k blocks
                by[a * kk + b] = 0.5 * sum.re;
                by[a * kk + s + b] = -0.5 * diff.im;
                by[(s + a) * kk + b] = 0.5 * diff.im;
                by[(s + a) * kk + s + b] = 0.5 * sum.re;
                // Ȳ_k blocks
                bq[a * kk + b] = -0.5 * sum.im;
                bq[a * kk + s + b] = -0.5 * diff.re;
                bq[(s + a) * kk + b] = 0.5 * diff.re;
                bq[(s + a) * kk + s + b] = -0.5 * sum.im;
            }
        }
        y.push(Stamp {
            idx: idx.clone(),
            block: by,
            dim: 2 * n,
        });
        ybar.push(Stamp {
            idx,
            block: bq,
            dim: 2 * n,
        });
        m.push(Stamp {
            idx: vec![k, k + n],
            block: vec![1.0, 0.0, 0.0, 1.0],
            dim: 2 * n,
        });
    }
    ConstraintMatrices {
        n,
        slack: model.slack(),
        y,
        ybar,
        m,
    }
}

/// Lagrange multipliers keyed by bus id: `lambda` on active power at PQ and
/// PV buses, `gamma` on reactive power at PQ buses, `mu` on the PV voltage
/// ratio constraints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub lambda: BTreeMap<usize, f64>,
    pub gamma: BTreeMap<usize, f64>,
    pub mu: BTreeMap<usize, f64>,
}

impl DualPoint {
    /// All-zero point with the right keys for `model`.
    pub fn zeros(model: &NetworkModel) -> Self {
        let id = |k: usize| model.buses()[k].id;
        Self {
            lambda: model.non_slack().into_iter().map(|k| (id(k), 0.0)).collect(),
            gamma: model.pq().into_iter().map(|k| (id(k), 0.0)).collect(),
            mu: model.pv().into_iter().map(|k| (id(k), 0.0)).collect(),
        }
    }

    /// `Σ λ_k P_k + Σ γ_k Q_k` over the specified injections.
    pub fn objective(&self, model: &NetworkModel) -> f64 {
        let bus = |id: &usize| &model.buses()[model.position(*id).expect("known bus")];
        let p: f64 = self.lambda.iter().map(|(id, l)| l * bus(id).p_inj).sum();
        let q: f64 = self.gamma.iter().map(|(id, g)| g * bus(id).q_inj).sum();
        p + q
    }
}

/// The matrix multiplying `μ_k`: `M_k − α_k² M_slack`. The PV constraint is
/// `V_k² = α_k² V_slack²` in the squared-magnitude variables the quadratic
/// forms produce.
pub fn pv_ratio_stamp(mats: &ConstraintMatrices, k: usize, alpha: f64) -> Stamp {
    mats.m[k].combine(1.0, mats.m_slack(), -alpha * alpha)
}

/// `A = M_slack − Σ_PQ (λ_k Y_k + γ_k Ȳ_k) − Σ_PV (λ_k Y_k + μ_k (M_k − α_k² M_slack))`.
pub fn assemble_lmi(
    model: &NetworkModel,
    mats: &ConstraintMatrices,
    alphas: &BTreeMap<usize, f64>,
    point: &DualPoint,
) -> Result<SymMatrix, NetworkError> {
    let pos = |id: usize| model.position(id).ok_or(NetworkError::UnknownBus(id));
    let mut a = mats.m_slack().to_dense();
    for (&id, &l) in &point.lambda {
        mats.y[pos(id)?].add_into(&mut a, -l);
    }
    for (&id, &g) in &point.gamma {
        mats.ybar[pos(id)?].add_into(&mut a, -g);
    }
    for (&id, &mu) in &point.mu {
        let alpha = *alphas.get(&id).ok_or(NetworkError::UnknownBus(id))?;
        mats.m[pos(id)?].add_into(&mut a, -mu);
        mats.m_slack().add_into(&mut a, mu * alpha * alpha);
    }
    Ok(a)
}
