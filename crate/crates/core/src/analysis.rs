//! Jacobian, Hessian and eigenstructure of the iteration map at λ*.
//!
//! Row-vector convention: `jacobian[(i′, i)] = ∂F_i/∂λ_{i′}` and
//! `hessian.h[i][(i′, i″)] = ∂²F_i/∂λ_{i′}∂λ_{i″}`. Divergence exponents
//! e^{D*_i − C} are taken as exactly 1 on type-I/II indices.

use serde::Serialize;

use crate::arimoto::FixedPointReport;
use crate::channel::{self, ChannelMatrix};
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};

/// Minimum separation between a type-I and a type-III eigenvalue.
pub const COLLISION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeTensors {
    pub m: usize,
    /// d1[(i′, i)] = −Σ_j P^{i′}_j P^i_j / Q*_j.
    pub d1: Matrix,
    /// d2[i][i′][i″] = Σ_j P^i_j P^{i′}_j P^{i″}_j / Q*_j², flattened.
    pub d2: Vec<f64>,
    /// E_{i′,i″} = Σ_k λ*_k D*_{k,i′} D*_{k,i″}.
    pub e_mat: Matrix,
}

impl DerivativeTensors {
    pub fn d2(&self, i: usize, a: usize, b: usize) -> f64 {
        self.d2[(i * self.m + a) * self.m + b]
    }
}

/// λ* with sub-threshold mass off the type-I set removed.
fn clean_lambda(fp: &FixedPointReport) -> Vec<f64> {
    (0..fp.m()).map(|i| if fp.type1.contains(&i) { fp.lambda_star[i] } else { 0.0 }).collect()
}

pub fn derivative_tensors(fp: &FixedPointReport, phi: &ChannelMatrix) -> Result<DerivativeTensors> {
    let m = phi.m();
    if fp.m() != m {
        return Err(Error::Dimension { what: "fixed point", expected: m, got: fp.m() });
    }
    let lam = clean_lambda(fp);
    let q = channel::output_vector(&lam, phi)?;
    if let Some(j) = q.iter().position(|&x| x <= 0.0) {
        return Err(Error::Validation(format!("Q*_{} is zero", j + 1)));
    }
    let n = phi.n();
    let d1 = Matrix::from_fn(m, m, |a, i| -(0..n).map(|j| phi.get(a, j) * phi.get(i, j) / q[j]).sum::<f64>());
    let mut d2 = vec![0.0; m * m * m];
    for i in 0..m {
        for a in 0..m {
            for b in 0..m {
                d2[(i * m + a) * m + b] =
                    (0..n).map(|j| phi.get(i, j) * phi.get(a, j) * phi.get(b, j) / (q[j] * q[j])).sum();
            }
        }
    }
    let e_mat = Matrix::from_fn(m, m, |a, b| (0..m).map(|k| lam[k] * d1[(k, a)] * d1[(k, b)]).sum());
    Ok(DerivativeTensors { m, d1, d2, e_mat })
}

/// J(λ*)_{i′i} = g_i(δ_{i′i} + λ*_i D*_{i′,i}) + λ*_i(1 − g_{i′}), g = e^{D*−C}.
pub fn jacobian(fp: &FixedPointReport, t: &DerivativeTensors) -> Matrix {
    let lam = clean_lambda(fp);
    let g = fp.theta_factors();
    let m = t.m;
    Matrix::from_fn(m, m, |a, i| {
        let delta = if a == i { 1.0 } else { 0.0 };
        g[i] * (delta + lam[i] * t.d1[(a, i)]) + lam[i] * (1.0 - g[a])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianTensor {
    /// h[i] = H_i(λ*).
    pub h: Vec<Matrix>,
    /// Largest gap between the general formula and the type-II shortcut.
    pub type2_shortcut_deviation: f64,
}

pub fn hessian(fp: &FixedPointReport, t: &DerivativeTensors) -> HessianTensor {
    let lam = clean_lambda(fp);
    let g = fp.theta_factors();
    let m = t.m;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let d1 = &t.d1;
    let h: Vec<Matrix> = (0..m)
        .map(|i| {
            Matrix::from_fn(m, m, |a, b| {
                let inner = d(i, a) * d1[(i, b)]
                    + d(i, b) * d1[(i, a)]
                    + lam[i] * (d1[(i, a)] * d1[(i, b)] + t.d2(i, a, b))
                    + (d(i, a) + lam[i] * d1[(i, a)]) * (1.0 - g[b])
                    + (d(i, b) + lam[i] * d1[(i, b)]) * (1.0 - g[a]);
                g[i] * inner + 2.0 * lam[i] * (1.0 - g[a]) * (1.0 - g[b])
                    - lam[i] * (g[a] * d1[(a, b)] + g[b] * d1[(a, b)] + t.e_mat[(a, b)] - d1[(a, b)])
            })
        })
        .collect();
    let mut dev = 0.0f64;
    for &i in &fp.type2 {
        let s = hessian_type2_shortcut(fp, t, i);
        dev = dev.max(s.sub(&h[i]).max_abs());
    }
    HessianTensor { h, type2_shortcut_deviation: dev }
}

/// S_{ii′} = 1 − e^{D*_{i′}−C} + D*_{i,i′}.
pub fn s_coefficients(fp: &FixedPointReport, t: &DerivativeTensors, i: usize) -> Vec<f64> {
    let g = fp.theta_factors();
    (0..t.m).map(|a| 1.0 - g[a] + t.d1[(i, a)]).collect()
}

/// H_{i,i′i″} = δ_{ii″} S_{ii′} + δ_{ii′} S_{ii″} for a type-II index i.
pub fn hessian_type2_shortcut(fp: &FixedPointReport, t: &DerivativeTensors, i: usize) -> Matrix {
    let s = s_coefficients(fp, t, i);
    Matrix::from_fn(t.m, t.m, |a, b| {
        (if i == b { s[a] } else { 0.0 }) + (if i == a { s[b] } else { 0.0 })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagonalization {
    /// I ∪ III indices first, type-II last (0-based original indices).
    pub order: Vec<usize>,
    /// Right eigenvectors as columns, rows in original index order. Columns:
    /// type-I modes (ascending θ), then type-III, then type-II unit vectors.
    pub a: Matrix,
    pub a_inv: Matrix,
    pub theta: Vec<f64>,
    /// Rows I ∪ III, columns of the non-unit block.
    pub a1: Matrix,
    /// Rows type-II, columns of the non-unit block.
    pub a2: Matrix,
    /// max |A⁻¹JA − Θ|.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub jacobian: Matrix,
    pub type1: Vec<usize>,
    pub type2: Vec<usize>,
    pub type3: Vec<usize>,
    pub j1: Matrix,
    pub j2: Matrix,
    pub j3: Matrix,
    /// √Λ(I − J^I)√Λ⁻¹ on the type-I block.
    pub symmetric_form: Matrix,
    /// Type-I eigenvalues, ascending.
    pub theta_type1: Vec<f64>,
    /// Columns: eigenvectors of J^I matching `theta_type1`.
    pub pi: Matrix,
    pub theta_type2: Vec<f64>,
    /// Diagonal of J^III, aligned with `type3`.
    pub theta_type3: Vec<f64>,
    /// All m eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub theta_max: f64,
    pub theta_sec: f64,
    /// θ_max is attained only in the type-III block.
    pub theta_max_in_type3: bool,
    pub b_max: Vec<f64>,
    pub b_max_is_right: bool,
    pub diagonalization: Option<Diagonalization>,
}

/// Block eigenvalues from the symmetric similarity of I − J^I.
pub fn eigenstructure(fp: &FixedPointReport, jac: &Matrix) -> Result<SpectralReport> {
    let lam = clean_lambda(fp);
    let i1 = &fp.type1;
    let m1 = i1.len();
    let j1 = jac.select(i1, i1);
    let j2 = jac.select(&fp.type2, &fp.type2);
    let j3 = jac.select(&fp.type3, &fp.type3);
    let b = Matrix::identity(m1).sub(&j1);
    for a in 0..m1 {
        let s: f64 = b.row(a).iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("row {} of I − J^I sums to {s}, not 1", i1[a] + 1)));
        }
    }
    let sq: Vec<f64> = i1.iter().map(|&i| lam[i].sqrt()).collect();
    let sym = Matrix::from_fn(m1, m1, |a, c| sq[a] * b[(a, c)] / sq[c]);
    // Symmetric in exact arithmetic; average away rounding before Jacobi.
    let sym = Matrix::from_fn(m1, m1, |a, c| 0.5 * (sym[(a, c)] + sym[(c, a)]));
    let eig = numerics::sym_eigen(&sym)?;
    // β ascending ⇒ θ = 1 − β descending; reverse for ascending θ.
    let mut theta_type1 = Vec::with_capacity(m1);
    let mut pi = Matrix::zeros(m1, m1);
    for (col, k) in (0..m1).rev().enumerate() {
        theta_type1.push(1.0 - eig.values[k]);
        let mut v: Vec<f64> = (0..m1).map(|a| eig.vectors[(a, k)] / sq[a]).collect();
        numerics::normalize_max(&mut v);
        for a in 0..m1 {
            pi[(a, col)] = v[a];
        }
    }
    let theta_type2 = vec![1.0; fp.type2.len()];
    let theta_type3: Vec<f64> = fp.type3.iter().map(|&i| jac[(i, i)]).collect();
    let mut all: Vec<f64> = theta_type1.iter().chain(&theta_type2).chain(&theta_type3).cloned().collect();
    all.sort_by(f64::total_cmp);
    let m = all.len();
    let theta_max = all[m - 1];
    let theta_sec = if m > 1 { all[m - 2] } else { theta_max };
    let top_other = theta_type1.iter().chain(&theta_type2).cloned().fold(f64::NEG_INFINITY, f64::max);
    let theta_max_in_type3 = theta_type3.iter().any(|&x| x == theta_max) && top_other < theta_max;
    let b_max = numerics::left_eigenvector(jac, theta_max)?;
    let jb = jac.mul_vec(&b_max);
    let b_max_is_right = jb.iter().zip(&b_max).all(|(x, y)| (x - theta_max * y).abs() <= 1e-8);
    Ok(SpectralReport {
        jacobian: jac.clone(),
        type1: fp.type1.clone(),
        type2: fp.type2.clone(),
        type3: fp.type3.clone(),
        j1,
        j2,
        j3,
        symmetric_form: sym,
        theta_type1,
        pi,
        theta_type2,
        theta_type3,
        eigenvalues: all,
        theta_max,
        theta_sec,
        theta_max_in_type3,
        b_max,
        b_max_is_right,
        diagonalization: None,
    })
}

/// Assemble A = [[Π, O], [V, I]] with v_{i′k} = (UΠ)_{i′k} / (θ_k − θ_{i′}).
pub fn diagonalize_jacobian(s: &SpectralReport) -> Result<Diagonalization> {
    let jac = &s.jacobian;
    let m = jac.rows;
    let rest: Vec<usize> = s.type3.iter().chain(&s.type2).cloned().collect();
    let theta_rest: Vec<f64> = rest.iter().map(|&i| jac[(i, i)]).collect();
    for &t1 in &s.theta_type1 {
        for &t3 in &s.theta_type3 {
            if (t1 - t3).abs() < COLLISION_TOL {
                return Err(Error::EigenCollision { a: t1, b: t3 });
            }
        }
    }
    let mut a = Matrix::zeros(m, m);
    let mut theta = Vec::with_capacity(m);
    let m1 = s.type1.len();
    for k in 0..m1 {
        let th = s.theta_type1[k];
        let mut col = vec![0.0; m];
        for (r, &i) in s.type1.iter().enumerate() {
            col[i] = s.pi[(r, k)];
        }
        for (&ip, &tp) in rest.iter().zip(&theta_rest) {
            let u: f64 = s.type1.iter().enumerate().map(|(r, &i)| jac[(ip, i)] * s.pi[(r, k)]).sum();
            col[ip] = u / (th - tp);
        }
        numerics::normalize_max(&mut col);
        for r in 0..m {
            a[(r, k)] = col[r];
        }
        theta.push(th);
    }
    for (c, (&i, &t)) in rest.iter().zip(&theta_rest).enumerate() {
        a[(i, m1 + c)] = 1.0;
        theta.push(t);
    }
    let a_inv = numerics::invert(&a)?;
    let d = a_inv.matmul(jac)?.matmul(&a)?;
    let residual = d.sub(&Matrix::diag(&theta)).max_abs();
    if residual > 1e-8 {
        return Err(Error::Diagonalization(residual));
    }
    let order: Vec<usize> = s.type1.iter().chain(&s.type3).chain(&s.type2).cloned().collect();
    let mp = m - s.type2.len();
    let cols: Vec<usize> = (0..mp).collect();
    let a1 = a.select(&order[..mp], &cols);
    let a2 = a.select(&order[mp..], &cols);
    Ok(Diagonalization { order, a, a_inv, theta, a1, a2, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmaxTests {
    pub b_max: Vec<f64>,
    pub is_right_eigenvector: bool,
    pub inner_product: f64,
    pub orthogonal: bool,
}

pub fn bmax_tests(s: &SpectralReport, mu0: &[f64]) -> BmaxTests {
    let inner = numerics::dot(mu0, &s.b_max);
    BmaxTests {
        b_max: s.b_max.clone(),
        is_right_eigenvector: s.b_max_is_right,
        inner_product: inner,
        orthogonal: inner.abs() <= 1e-10,
    }
}

/// Everything the analysis computes at one fixed point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub tensors: DerivativeTensors,
    pub spectral: SpectralReport,
    pub hessian: HessianTensor,
    /// Why `spectral.diagonalization` is missing, when it is.
    pub diagonalization_error: Option<String>,
}

pub fn analyze(fp: &FixedPointReport, phi: &ChannelMatrix) -> Result<Analysis> {
    let tensors = derivative_tensors(fp, phi)?;
    let jac = jacobian(fp, &tensors);
    let mut spectral = eigenstructure(fp, &jac)?;
    let (diag, err) = match diagonalize_jacobian(&spectral) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    spectral.diagonalization = diag;
    let hessian = hessian(fp, &tensors);
    Ok(Analysis { tensors, spectral, hessian, diagonalization_error: err })
}
