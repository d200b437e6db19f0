//! Small dense linear algebra.
//!
//! Only what the fixed-point analysis needs: a cyclic Jacobi eigensolver for
//! symmetric matrices, LU solves and inverses, and inverse iteration for left
//! eigenvectors. Everything is row-major `f64`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 50;
/// Exit when the off-diagonal Frobenius norm is below this times `‖M‖`.
pub const JACOBI_OFF_TOL: f64 = 1e-13;
/// Relative pivot threshold for LU.
pub const PIVOT_REL_TOL: f64 = 1e-12;
/// Relative pivot threshold used for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Inverse-iteration steps for left eigenvectors.
pub const INVERSE_ITERATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension { what: "matrix row", expected: c, got: row.len() });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation("matrix entries must be finite".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension { what: "matmul", expected: self.cols, got: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `M x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `x M` for a row vector `x`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(self.row(i)) {
                *o += xi * m;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Submatrix picking the given rows and columns, in that order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Index of the largest-magnitude entry; ties go to the lowest index.
fn argmax_abs(v: &[f64]) -> usize {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter().position(|x| x.abs() >= m * (1.0 - 1e-9)).unwrap_or(0)
}

/// Scale to unit Euclidean norm with the largest-magnitude entry positive.
pub fn normalize_unit(v: &mut [f64]) {
    let n = norm2(v);
    if n == 0.0 {
        return;
    }
    let s = if v[argmax_abs(v)] < 0.0 { -1.0 / n } else { 1.0 / n };
    v.iter_mut().for_each(|x| *x *= s);
}

/// Scale so the largest-magnitude entry equals +1.
pub fn normalize_max(v: &mut [f64]) {
    let k = argmax_abs(v);
    let p = v[k];
    if p == 0.0 {
        return;
    }
    v.iter_mut().for_each(|x| *x /= p);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi diagonalization of a symmetric matrix.
pub fn sym_eigen(m: &Matrix) -> Result<EigenPairs> {
    if !m.is_square() {
        return Err(Error::Dimension { what: "sym_eigen", expected: m.rows, got: m.cols });
    }
    let n = m.rows;
    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .fold(0.0f64, |a, (i, j)| a.max((m[(i, j)] - m[(j, i)]).abs()));
    if asym > 1e-10 {
        return Err(Error::Validation(format!("matrix is not symmetric (asymmetry {asym:.3e})")));
    }
    let scale = m.frobenius();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let off = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > JACOBI_OFF_TOL * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { what: "Jacobi eigensolver", iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = v.column(i);
        normalize_unit(&mut col);
        for r in 0..n {
            vectors[(r, k)] = col[r];
        }
    }
    Ok(EigenPairs { values, vectors })
}

struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

fn lu_decompose(m: &Matrix, rel_tol: Option<f64>) -> Result<Lu> {
    if !m.is_square() {
        return Err(Error::Dimension { what: "LU", expected: m.rows, got: m.cols });
    }
    let n = m.rows;
    let threshold = rel_tol.map(|t| t * m.max_abs());
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&a, &b| lu[(a, k)].abs().total_cmp(&lu[(b, k)].abs())).unwrap();
        let piv = lu[(p, k)].abs();
        match threshold {
            Some(t) if piv < t || piv == 0.0 => {
                return Err(Error::Singular { pivot: piv, threshold: t })
            }
            None if piv == 0.0 => lu[(p, k)] = f64::EPSILON * m.max_abs().max(f64::MIN_POSITIVE),
            _ => {}
        }
        if p != k {
            for j in 0..n {
                lu.data.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / lu[(k, k)];
            lu[(i, k)] = f;
            for j in k + 1..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solve `M x = b` by LU with partial pivoting.
pub fn lin_solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.rows {
        return Err(Error::Dimension { what: "lin_solve rhs", expected: m.rows, got: b.len() });
    }
    Ok(lu_decompose(m, Some(PIVOT_REL_TOL))?.solve(b))
}

pub fn invert(m: &Matrix) -> Result<Matrix> {
    let lu = lu_decompose(m, Some(PIVOT_REL_TOL))?;
    let n = m.rows;
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (i, x) in lu.solve(&e).into_iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    Ok(out)
}

/// Numerical row rank by Gaussian elimination with full pivoting.
pub fn rank(m: &Matrix, rel_tol: f64) -> usize {
    let mut a = m.clone();
    let threshold = rel_tol * a.max_abs();
    if a.max_abs() == 0.0 {
        return 0;
    }
    let (rows, cols) = (a.rows, a.cols);
    let mut r = 0;
    let mut used_cols = vec![false; cols];
    while r < rows {
        let mut best = (0.0, 0, 0);
        for i in r..rows {
            for j in 0..cols {
                if !used_cols[j] && a[(i, j)].abs() > best.0 {
                    best = (a[(i, j)].abs(), i, j);
                }
            }
        }
        if best.0 <= threshold {
            break;
        }
        let (_, pi, pj) = best;
        for j in 0..cols {
            a.data.swap(r * cols + j, pi * cols + j);
        }
        used_cols[pj] = true;
        for i in r + 1..rows {
            let f = a[(i, pj)] / a[(r, pj)];
            for j in 0..cols {
                a[(i, j)] -= f * a[(r, j)];
            }
        }
        r += 1;
    }
    r
}

/// Left eigenvector `b M = θ b` by inverse iteration on `ᵗM`.
///
/// Seeds are tried in the order e₁, e₂, …; the first that converges is
/// returned with unit norm and its largest-magnitude entry positive.
pub fn left_eigenvector(m: &Matrix, theta: f64) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension { what: "left_eigenvector", expected: m.rows, got: m.cols });
    }
    let n = m.rows;
    let mt = m.transpose();
    let shift = theta + 1e-10 * m.max_abs().max(1.0);
    let mut shifted = mt.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = lu_decompose(&shifted, None)?;
    let scale = m.max_abs().max(1.0);
    let mut best_residual = f64::INFINITY;
    for seed in 0..n {
        let mut x = vec![0.0; n];
        x[seed] = 1.0;
        for _ in 0..INVERSE_ITERATIONS {
            x = lu.solve(&x);
            let nx = norm2(&x);
            if !nx.is_finite() || nx == 0.0 {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
        }
        normalize_unit(&mut x);
        let bm = m.vec_mul(&x);
        let res = bm.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        if res <= 1e-8 * scale {
            return Ok(x);
        }
        best_residual = best_residual.min(res);
    }
    Err(Error::NotEigenvalue { theta, residual: best_residual })
}
