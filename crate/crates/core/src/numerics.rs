//! Dense linear-algebra kernels: discrete Lyapunov solves, ordered SVD,
//! Moore–Penrose pseudoinverse, spectral radius and numerical rank.

use nalgebra::{DMatrix, DVector, Schur};
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Default relative tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Largest state dimension handled by the direct (vectorized) Lyapunov solve.
pub const DIRECT_LYAP_MAX_DIM: usize = 30;

const STABILITY_MARGIN: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not Schur stable (spectral radius {0})")]
    NotStable(f64),
    #[error("right-hand side is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear system is singular")]
    Singular,
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
}

/// Singular value decomposition with singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left_vectors: Matrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: Matrix,
}

impl SvdResult {
    /// Reassembles `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let s = Matrix::from_diagonal(&Vector::from_column_slice(&self.singular_values));
        &self.left_vectors * s * self.right_vectors.transpose()
    }
}

/// Thin SVD, singular values in nonincreasing order.
pub fn svd(m: &Matrix) -> SvdResult {
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("left singular vectors requested");
    let vt = dec.v_t.expect("right singular vectors requested");
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let k = order.len();
    let mut left = Matrix::zeros(m.nrows(), k);
    let mut right = Matrix::zeros(m.ncols(), k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &vt.row(src).transpose());
        values.push(s[src].max(0.0));
    }
    SvdResult {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    }
}

/// Number of singular values strictly above `tol` times the largest one.
pub fn numerical_rank(m: &Matrix, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.singular_values();
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}

/// Moore–Penrose pseudoinverse via SVD.
pub fn pseudoinverse(m: &Matrix) -> Matrix {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return Matrix::zeros(cols, rows);
    }
    let dec = svd(m);
    let smax = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = f64::EPSILON * rows.max(cols) as f64 * smax;
    let mut out = Matrix::zeros(cols, rows);
    for (i, &sv) in dec.singular_values.iter().enumerate() {
        if sv > cutoff && sv > 0.0 {
            let v = dec.right_vectors.column(i);
            let u = dec.left_vectors.column(i);
            out += (v * u.transpose()) / sv;
        }
    }
    out
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    assert!(m.is_square(), "spectral_radius needs a square matrix");
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => eigenvalue_moduli(m)
            .map(|v| v.into_iter().fold(0.0, f64::max))
            .unwrap_or(f64::INFINITY),
    }
}

fn eigenvalue_moduli(m: &Matrix) -> Result<Vec<f64>, NumericsError> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(NumericsError::EigenFailure)?;
    let ev = schur.complex_eigenvalues();
    Ok(ev.iter().map(|c| c.norm()).collect())
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Solves `X = W + A X Aᵀ` for Schur-stable `A` and symmetric `W`.
pub fn solve_dlyap(a_cl: &Matrix, w: &Matrix) -> Result<Matrix, NumericsError> {
    let n = a_cl.nrows();
    if !a_cl.is_square() || w.shape() != (n, n) {
        return Err(NumericsError::DimensionMismatch(format!(
            "A is {:?}, W is {:?}",
            a_cl.shape(),
            w.shape()
        )));
    }
    let wnorm = w.norm();
    let asym = (w - w.transpose()).norm();
    if asym > SYMMETRY_TOL * wnorm.max(f64::MIN_POSITIVE) {
        return Err(NumericsError::NotSymmetric(asym / wnorm.max(f64::MIN_POSITIVE)));
    }
    let rho = spectral_radius(a_cl);
    if !(rho < 1.0 - STABILITY_MARGIN) {
        return Err(NumericsError::NotStable(rho));
    }
    let w = (w + w.transpose()) * 0.5;
    let x = if n <= DIRECT_LYAP_MAX_DIM {
        dlyap_direct(a_cl, &w)?
    } else {
        dlyap_doubling(a_cl, &w)
    };
    Ok((&x + x.transpose()) * 0.5)
}

/// Half-vectorized Kronecker solve: unknowns are the upper triangle of X.
fn dlyap_direct(a: &Matrix, w: &Matrix) -> Result<Matrix, NumericsError> {
    let n = a.nrows();
    let dim = n * (n + 1) / 2;
    let idx = |i: usize, j: usize| -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    };

    let mut lhs = Matrix::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    for i in 0..n {
        for j in i..n {
            let row = idx(i, j);
            rhs[row] = w[(i, j)];
            lhs[(row, row)] += 1.0;
            // (A X Aᵀ)_ij = Σ_k Σ_l A_ik X_kl A_jl
            for k in 0..n {
                let aik = a[(i, k)];
                let ajk = a[(j, k)];
                for l in k..n {
                    let coeff = if k == l {
                        aik * a[(j, l)]
                    } else {
                        aik * a[(j, l)] + a[(i, l)] * ajk
                    };
                    if coeff != 0.0 {
                        lhs[(row, idx(k, l))] -= coeff;
                    }
                }
            }
        }
    }

    let lu = lhs.lu();
    let sol = lu.solve(&rhs).ok_or(NumericsError::Singular)?;
    let mut x = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = sol[idx(i, j)];
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }

    // one step of iterative refinement on the original equation
    let resid = w + a * &x * a.transpose() - &x;
    if resid.norm() > 1e-13 * x.norm() {
        let mut r = Vector::zeros(dim);
        for i in 0..n {
            for j in i..n {
                r[idx(i, j)] = resid[(i, j)];
            }
        }
        if let Some(dx) = lu.solve(&r) {
            for i in 0..n {
                for j in i..n {
                    let v = dx[idx(i, j)];
                    x[(i, j)] += v;
                    if i != j {
                        x[(j, i)] += v;
                    }
                }
            }
        }
    }
    Ok(x)
}

/// Smith doubling: X = Σ A^k W (Aᵀ)^k accumulated in squaring steps.
fn dlyap_doubling(a: &Matrix, w: &Matrix) -> Matrix {
    let mut x = w.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let incr = &ak * &x * ak.transpose();
        let done = incr.norm() <= f64::EPSILON * x.norm();
        x += incr;
        if done {
            break;
        }
        ak = &ak * &ak;
    }
    x
}

/// True when `m` is symmetric positive definite (Cholesky succeeds).
pub fn is_spd(m: &Matrix) -> bool {
    if !m.is_square() || m.is_empty() {
        return false;
    }
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * m.norm() {
        return false;
    }
    m.clone().cholesky().is_some()
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    let inv = m.clone().cholesky()?.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// 2-norm condition number of a symmetric matrix from its eigenvalues.
pub fn symmetric_condition(m: &Matrix) -> f64 {
    let ev = m.clone().symmetric_eigenvalues();
    let max = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = ev.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Stacks matrices with equal column count vertically.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), b.shape()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Stacks matrices with equal row count horizontally.
pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Serde adapter storing a matrix as nested row-major arrays.
pub mod nested_rows {
    use super::Matrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err("matrix must have at least one row".into());
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return Err("matrix must have at least one column".into());
        }
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err("matrix entries must be finite".into());
        }
        Ok(Matrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}
