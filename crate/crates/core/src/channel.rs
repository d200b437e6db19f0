//! Channel matrices, distributions and the information-theoretic primitives.
//!
//! All logarithms are natural; results are in nats.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};

/// Row sums must match 1 this closely after ingestion.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Rows within this distance of 1 are renormalized on ingestion.
pub const RENORMALIZE_TOL: f64 = 1e-9;
/// Entries below this are exact zeros.
pub const ZERO_FLOOR: f64 = 1e-300;

fn is_zero(x: f64) -> bool {
    x < ZERO_FLOOR
}

/// Row-stochastic m×n matrix Φ with row i the output law P^i.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelMatrix {
    m: usize,
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl ChannelMatrix {
    /// Validate rows exactly as given.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::Validation(format!("need at least 2 input symbols, got {m}")));
        }
        let n = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Validation(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    r.len()
                )));
            }
            for (j, &x) in r.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::Validation(format!(
                        "entry ({}, {}) = {x} is not a probability",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Validation(format!("row {} sums to {s:.3}", i + 1)));
            }
        }
        if n < m {
            return Err(Error::Validation(format!(
                "output alphabet ({n}) smaller than input alphabet ({m}): rank would be deficient"
            )));
        }
        for j in 0..n {
            if rows.iter().all(|r| is_zero(r[j])) {
                return Err(Error::Validation(format!("output column {} is never used", j + 1)));
            }
        }
        let ch = ChannelMatrix { m, n, rows };
        let r = matrix_rank(&ch);
        if r < m {
            return Err(Error::Validation(format!("channel rank {r} is below m = {m}")));
        }
        Ok(ch)
    }

    /// Renormalize rows that are within 1e-9 of stochastic, then validate.
    pub fn new_renormalized(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter_mut().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > RENORMALIZE_TOL {
                return Err(Error::Validation(format!("row {} sums to {s:.3}", i + 1)));
            }
            r.iter_mut().for_each(|x| *x /= s);
        }
        Self::new(rows)
    }

    /// m×m noiseless channel.
    pub fn identity(m: usize) -> Self {
        let rows = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(rows).expect("identity channel is valid")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.rows).expect("rows are rectangular")
    }
}

fn check_simplex(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Validation(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = values.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Validation(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Input distribution λ on the m input symbols.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct InputDistribution(Vec<f64>);

impl InputDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values, "input distribution")?;
        Ok(Self(values))
    }

    /// Scale a nonnegative vector onto the simplex.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let s: f64 = values.iter().sum();
        if !(s > 0.0) || values.iter().any(|x| *x < 0.0) {
            return Err(Error::Validation("cannot normalize input distribution".into()));
        }
        Ok(Self(values.into_iter().map(|x| x / s).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Output distribution Q = λΦ.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OutputDistribution(Vec<f64>);

impl OutputDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values, "output distribution")?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Q = λΦ for an arbitrary real λ (no simplex check).
pub fn output_vector(lambda: &[f64], phi: &ChannelMatrix) -> Result<Vec<f64>> {
    if lambda.len() != phi.m() {
        return Err(Error::Dimension { what: "input distribution", expected: phi.m(), got: lambda.len() });
    }
    let mut q = vec![0.0; phi.n()];
    for (l, row) in lambda.iter().zip(phi.rows()) {
        for (qj, p) in q.iter_mut().zip(row) {
            *qj += l * p;
        }
    }
    Ok(q)
}

pub fn output_distribution(lambda: &InputDistribution, phi: &ChannelMatrix) -> Result<OutputDistribution> {
    let mut q = output_vector(lambda.as_slice(), phi)?;
    // Clip rounding residue; the sum is already 1 to ~1e-16.
    q.iter_mut().for_each(|x| *x = x.max(0.0));
    OutputDistribution::new(q)
}

/// D(Q‖Q′) = Σ Q_j ln(Q_j/Q′_j) with 0 ln 0 = 0.
pub fn kl_divergence(q: &[f64], q_ref: &[f64]) -> Result<f64> {
    if q.len() != q_ref.len() {
        return Err(Error::Dimension { what: "kl_divergence", expected: q.len(), got: q_ref.len() });
    }
    let mut d = 0.0;
    for (j, (&a, &b)) in q.iter().zip(q_ref).enumerate() {
        if is_zero(a) {
            continue;
        }
        if b <= 0.0 {
            return Err(Error::InfiniteDivergence { index: j });
        }
        d += a * (a / b).ln();
    }
    Ok(d)
}

/// D_i = D(P^i‖Q) for every row.
pub fn divergences_to(phi: &ChannelMatrix, q: &[f64]) -> Result<Vec<f64>> {
    phi.rows().iter().map(|r| kl_divergence(r, q)).collect()
}

/// D_i = D(P^i‖λΦ) for every row.
pub fn divergences(lambda: &[f64], phi: &ChannelMatrix) -> Result<Vec<f64>> {
    let q = output_vector(lambda, phi)?;
    divergences_to(phi, &q)
}

/// I(λ,Φ) = Σ λ_i D(P^i‖λΦ).
pub fn mutual_information(lambda: &InputDistribution, phi: &ChannelMatrix) -> Result<f64> {
    let d = divergences(lambda.as_slice(), phi)?;
    Ok(lambda.as_slice().iter().zip(&d).filter(|(l, _)| **l > 0.0).map(|(l, d)| l * d).sum())
}

/// Numerical row rank with pivot threshold 1e-10 × max entry.
pub fn matrix_rank(phi: &ChannelMatrix) -> usize {
    numerics::rank(&phi.to_matrix(), numerics::RANK_REL_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KuhnTuckerReport {
    pub divergences: Vec<f64>,
    pub capacity_estimate: f64,
    /// max_i D_i − I(λ,Φ).
    pub max_violation: f64,
    /// Largest |D_i − I| over the support.
    pub support_spread: f64,
    pub support: Vec<usize>,
}

impl KuhnTuckerReport {
    /// λ achieves capacity to within `tol` nats.
    pub fn is_optimal(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.support_spread <= tol
    }
}

pub fn kuhn_tucker_check(
    lambda: &InputDistribution,
    phi: &ChannelMatrix,
    support_tol: f64,
) -> Result<KuhnTuckerReport> {
    let d = divergences(lambda.as_slice(), phi)?;
    let l = lambda.as_slice();
    let cap: f64 = l.iter().zip(&d).filter(|(l, _)| **l > 0.0).map(|(l, d)| l * d).sum();
    let support: Vec<usize> = (0..l.len()).filter(|&i| l[i] > support_tol).collect();
    let max_violation = d.iter().fold(f64::NEG_INFINITY, |a, x| a.max(x - cap));
    let support_spread = support.iter().fold(0.0f64, |a, &i| a.max((d[i] - cap).abs()));
    Ok(KuhnTuckerReport { divergences: d, capacity_estimate: cap, max_violation, support_spread, support })
}

/// A matrix file: the validated channel plus the decimal tokens it came from.
#[derive(Debug, Clone)]
pub struct ParsedMatrix {
    pub channel: ChannelMatrix,
    pub tokens: Vec<Vec<String>>,
}

/// Parse the plain-text matrix format: a header line `m n`, then m rows of
/// n numbers. Blank lines and lines starting with `#` are skipped.
pub fn parse_matrix(text: &str) -> Result<ParsedMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| Error::Validation("empty matrix file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str, col: usize| {
        s.parse::<usize>()
            .map_err(|_| Error::Validation(format!("line {hl}, column {col}: bad dimension '{s}'")))
    };
    if dims.len() != 2 {
        return Err(Error::Validation(format!("line {hl}: header must be 'm n'")));
    }
    let m = parse_dim(dims[0], 1)?;
    let n = parse_dim(dims[1], 2)?;
    let mut rows = Vec::with_capacity(m);
    let mut tokens = Vec::with_capacity(m);
    for (ln, line) in lines {
        if rows.len() == m {
            return Err(Error::Validation(format!("line {ln}: more than {m} rows")));
        }
        let toks: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if toks.len() != n {
            return Err(Error::Validation(format!("line {ln}: expected {n} numbers, found {}", toks.len())));
        }
        let row = toks
            .iter()
            .enumerate()
            .map(|(c, t)| {
                t.parse::<f64>()
                    .map_err(|_| Error::Validation(format!("line {ln}, column {}: bad number '{t}'", c + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        tokens.push(toks);
    }
    if rows.len() != m {
        return Err(Error::Validation(format!("expected {m} rows, found {}", rows.len())));
    }
    let channel = ChannelMatrix::new_renormalized(rows)?;
    Ok(ParsedMatrix { channel, tokens })
}

/// Render a channel in the matrix file format (shortest round-trip decimals).
pub fn format_matrix(phi: &ChannelMatrix) -> String {
    let mut s = format!("{} {}\n", phi.m(), phi.n());
    for r in phi.rows() {
        let line: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}
