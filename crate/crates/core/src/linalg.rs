//! Dense real linear algebra: symmetric storage, semidefinite Cholesky,
//! the symmetric eigenproblem and partially pivoted LU.
//!
//! Everything here is sized for the problems this crate solves (at most a few
//! hundred rows), so storage is dense and row-major throughout.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Relative pivot threshold below which [`solve_linear`] reports singularity.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive semidefinite (pivot {index} = {pivot:.3e})")]
    NotPsd { index: usize, pivot: f64 },
    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("symmetric eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

/// General dense matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in mul_vec");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Real symmetric matrix. Both triangles are stored and every mutator writes
/// the mirrored entry, so `m[(i, j)] == m[(j, i)]` holds bit-for-bit.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    inner: Matrix,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "symmetric matrix must have dimension >= 1");
        Self {
            inner: Matrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "symmetric matrix must have dimension >= 1");
        Self {
            inner: Matrix::identity(n),
        }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.inner[(i, i)] = v;
        }
        m
    }

    /// Fills the upper triangle from `f(i, j)` (i <= j) and mirrors it.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.inner[(i, j)] = v;
                m.inner[(j, i)] = v;
            }
        }
        m
    }

    /// Accepts a square matrix that is exactly symmetric; returns `None`
    /// otherwise.
    pub fn try_from_matrix(m: Matrix) -> Option<Self> {
        if !m.is_square() || m.rows() == 0 {
            return None;
        }
        let n = m.rows();
        for i in 0..n {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return None;
                }
            }
        }
        Some(Self { inner: m })
    }

    /// Symmetric part `(m + mᵀ)/2` of a square matrix.
    pub fn symmetrize(m: &Matrix) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        Self::from_upper_fn(m.rows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn n(&self) -> usize {
        self.inner.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Sets entry (i, j) and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.inner[(i, j)] = v;
        self.inner[(j, i)] = v;
    }

    /// Adds `v` to entry (i, j) and, off the diagonal, to its mirror.
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.inner[(i, j)] += v;
        if i != j {
            self.inner[(j, i)] += v;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SymMatrix) {
        assert_eq!(self.n(), other.n(), "dimension mismatch in axpy");
        for (a, b) in self.inner.data.iter_mut().zip(&other.inner.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        let mut out = self.clone();
        out.inner.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.inner.mul_vec(x)
    }

    /// `xᵀ m x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.get(i, i)).sum()
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.n()).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.inner.norm_fro()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.inner)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dimension mismatch in dot");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lower-triangular factor `L` with `m = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn into_factor(self) -> Matrix {
        self.l
    }

    /// `log det m`; `-inf` when a pivot is zero.
    pub fn log_det(&self) -> f64 {
        (0..self.l.rows()).map(|i| 2.0 * self.l[(i, i)].ln()).sum()
    }

    /// Solves `m x = b`. Only meaningful for strictly positive pivots.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(b.len(), n, "dimension mismatch in Cholesky::solve");
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (y[i] - s) / row[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `m⁻¹` assembled from the factor.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.l.rows();
        // Invert L in place (lower triangular), then form L⁻ᵀ L⁻¹.
        let mut linv = Matrix::zeros(n, n);
        for j in 0..n {
            linv[(j, j)] = 1.0 / self.l[(j, j)];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l[(i, k)] * linv[(k, j)];
                }
                linv[(i, j)] = -s / self.l[(i, i)];
            }
        }
        SymMatrix::from_upper_fn(n, |i, j| {
            // (L⁻ᵀ L⁻¹)_{ij} = Σ_{k >= max(i,j)} linv[k][i] linv[k][j]
            let mut s = 0.0;
            for k in j.max(i)..n {
                s += linv[(k, i)] * linv[(k, j)];
            }
            s
        })
    }
}

/// Semidefinite Cholesky factorization.
///
/// Pivots down to `-tol * max_diag` are accepted; a pivot inside
/// `[-tol, tol] * max_diag` is treated as zero, in which case the remaining
/// column must vanish to the same tolerance (Cauchy-Schwarz) for the matrix to
/// count as PSD.
pub fn cholesky_psd(m: &SymMatrix, tol: f64) -> Result<Cholesky, LinalgError> {
    let n = m.n();
    let scale = m.max_diag().max(0.0);
    let thresh = tol * scale;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -thresh || (scale == 0.0 && d < 0.0) {
            return Err(LinalgError::NotPsd { index: j, pivot: d });
        }
        if d <= thresh {
            l[(j, j)] = 0.0;
            for i in j + 1..n {
                let mut r = m.get(i, j);
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                let bound = (d.max(0.0) + thresh) * (m.get(i, i).max(0.0) + thresh);
                if r * r > bound {
                    return Err(LinalgError::NotPsd { index: j, pivot: d });
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut r = m.get(i, j);
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                r -= l.data[ri + k] * l.data[rj + k];
            }
            l[(i, j)] = r / ljj;
        }
    }
    Ok(Cholesky { l })
}

/// Strict Cholesky: `None` unless every pivot is positive.
pub fn cholesky_pd(m: &SymMatrix) -> Option<Cholesky> {
    let n = m.n();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let rj = j * n;
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.data[rj + k] * l.data[rj + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l.data[rj + j] = ljj;
        for i in j + 1..n {
            let ri = i * n;
            let mut r = m.get(i, j);
            for k in 0..j {
                r -= l.data[ri + k] * l.data[rj + k];
            }
            l.data[ri + j] = r / ljj;
        }
    }
    Some(Cholesky { l })
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|r| self.vectors[(r, i)]).collect()
    }
}

/// Symmetric eigensolver: Householder tridiagonalization followed by the
/// implicit QL iteration with Wilkinson-style shifts.
pub fn eig_sym(m: &SymMatrix) -> Result<SymEig, LinalgError> {
    let n = m.n();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| m.as_matrix().row(i).to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e, 30 * n.max(1))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r][order[c]]);
    Ok(SymEig { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn eigvals_sym(m: &SymMatrix) -> Result<Vec<f64>, LinalgError> {
    eig_sym(m).map(|e| e.values)
}

// Householder reduction to tridiagonal form (EISPACK tred2 lineage).
fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e), accumulating rotations into v.
fn ql_implicit(
    v: &mut [Vec<f64>],
    d: &mut [f64],
    e: &mut [f64],
    max_iter: usize,
) -> Result<(), LinalgError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    if n > 0 {
        e[n - 1] = 0.0;
    }
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let mut total_iter = 0usize;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > max_iter {
                    return Err(LinalgError::NoConvergence {
                        iterations: total_iter - 1,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// LU factorization with partial pivoting, `P a = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.rows();
        let scale = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pmax > SINGULAR_PIVOT_TOL * scale) || !pmax.is_finite() {
                return Err(LinalgError::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f == 0.0 {
                    continue;
                }
                let (top, bottom) = lu.data.split_at_mut(i * n);
                let krow = &top[k * n..k * n + n];
                let irow = &mut bottom[..n];
                for j in k + 1..n {
                    irow[j] -= f * krow[j];
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n, "dimension mismatch in Lu::solve");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Solves `a x = b` by partially pivoted LU.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    assert_eq!(a.rows(), b.len(), "dimension mismatch in solve_linear");
    Ok(Lu::factor(a)?.solve(b))
}

/// Singular values of a general matrix, ascending, via the symmetric
/// embedding `[[0, a], [aᵀ, 0]]` whose eigenvalues are `±σ_i`. This keeps
/// small singular values at absolute accuracy ~ε‖a‖ instead of the ~√ε‖a‖
/// one gets from the normal equations.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let (r, c) = (a.rows(), a.cols());
    let n = r + c;
    let mut s = SymMatrix::zeros(n);
    for i in 0..r {
        for j in 0..c {
            s.set(i, r + j, a[(i, j)]);
        }
    }
    let w = eigvals_sym(&s)?;
    let k = r.min(c);
    // The k largest eigenvalues are the singular values.
    let mut sv: Vec<f64> = w[n - k..].iter().map(|v| v.max(0.0)).collect();
    sv.sort_by(f64::total_cmp);
    Ok(sv)
}
