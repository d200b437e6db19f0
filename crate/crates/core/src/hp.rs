//! Extended-precision evaluation of the iteration.
//!
//! Traces near a fixed point reach ‖λ^N − λ*‖ ≈ 1e-100 and C − I ≈ 1e-200,
//! far below what `f64` arithmetic can resolve, so traces run on
//! `astro_float::BigFloat` at a configurable precision (512 bits default).

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};

pub const DEFAULT_BITS: usize = 512;
const RM: RoundingMode = RoundingMode::ToEven;

/// Precision plus the constant cache astro-float needs for ln/exp.
pub struct Hp {
    bits: usize,
    consts: Consts,
}

impl std::fmt::Debug for Hp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hp").field("bits", &self.bits).finish()
    }
}

impl Hp {
    pub fn new(bits: usize) -> Result<Self> {
        if !(64..=1 << 16).contains(&bits) {
            return Err(Error::Validation(format!("precision {bits} bits out of range 64..=65536")));
        }
        let consts = Consts::new().map_err(|e| Error::Domain(format!("cannot set up constants: {e}")))?;
        Ok(Hp { bits, consts })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn zero(&self) -> BigFloat {
        BigFloat::from_word(0, self.bits)
    }

    pub fn one(&self) -> BigFloat {
        BigFloat::from_word(1, self.bits)
    }

    pub fn from_f64(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.bits)
    }

    pub fn parse(&mut self, s: &str) -> Result<BigFloat> {
        let x = BigFloat::parse(s.trim(), Radix::Dec, self.bits, RM, &mut self.consts);
        if x.is_nan() {
            return Err(Error::Validation(format!("'{s}' is not a decimal number")));
        }
        Ok(x)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.bits, RM)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.bits, RM)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.bits, RM)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.bits, RM)
    }

    pub fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(self.bits, RM, &mut self.consts)
    }

    pub fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.bits, RM, &mut self.consts)
    }

    pub fn sqrt(&self, a: &BigFloat) -> BigFloat {
        a.sqrt(self.bits, RM)
    }

    pub fn sum<'a>(&self, xs: impl IntoIterator<Item = &'a BigFloat>) -> BigFloat {
        xs.into_iter().fold(self.zero(), |acc, x| self.add(&acc, x))
    }

    /// Euclidean norm of a − b.
    pub fn dist(&self, a: &[BigFloat], b: &[BigFloat]) -> BigFloat {
        let s = a.iter().zip(b).fold(self.zero(), |acc, (x, y)| {
            let d = self.sub(x, y);
            self.add(&acc, &self.mul(&d, &d))
        });
        self.sqrt(&s)
    }

    pub fn decimal(&mut self, a: &BigFloat) -> String {
        a.format(Radix::Dec, RM, &mut self.consts).unwrap_or_else(|_| "NaN".into())
    }
}

/// Nearest-ish `f64` (mantissa truncated to 64 bits before rounding).
pub fn to_f64(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    let Some((words, _, sign, exp, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    let Some(&top) = words.last() else { return 0.0 };
    if top == 0 {
        return 0.0;
    }
    // value = 0.top… × 2^exp
    let mut v = top as f64 / 18446744073709551616.0;
    let mut e = exp as i64;
    while e > 1000 {
        v *= 2f64.powi(1000);
        e -= 1000;
        if v.is_infinite() {
            break;
        }
    }
    while e < -1000 {
        v *= 2f64.powi(-1000);
        e += 1000;
        if v == 0.0 {
            break;
        }
    }
    v *= 2f64.powi(e as i32);
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

/// Natural log of |x| as f64, valid far outside the f64 range.
pub fn ln_abs_f64(x: &BigFloat) -> f64 {
    let Some((words, _, _, exp, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    match words.last() {
        Some(&top) if top != 0 => {
            (top as f64 / 18446744073709551616.0).ln() + exp as f64 * std::f64::consts::LN_2
        }
        _ => f64::NEG_INFINITY,
    }
}

/// Channel rows at extended precision with Σ_j P ln P cached per row.
#[derive(Debug, Clone)]
pub struct HpChannel {
    pub rows: Vec<Vec<BigFloat>>,
    plogp: Vec<BigFloat>,
}

impl HpChannel {
    /// Rows given as decimal strings; each row is renormalized exactly.
    pub fn from_decimal(hp: &mut Hp, rows: &[Vec<String>]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| hp.parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_rows(hp, parsed))
    }

    /// Rows taken as the exact binary values of the `f64` channel.
    pub fn from_channel(hp: &mut Hp, phi: &ChannelMatrix) -> Self {
        let rows = phi.rows().iter().map(|r| r.iter().map(|x| hp.from_f64(*x)).collect()).collect();
        Self::from_rows(hp, rows)
    }

    pub fn from_rows(hp: &mut Hp, rows: Vec<Vec<BigFloat>>) -> Self {
        let rows: Vec<Vec<BigFloat>> = rows
            .into_iter()
            .map(|r| {
                let s = hp.sum(&r);
                r.iter().map(|x| hp.div(x, &s)).collect()
            })
            .collect();
        let plogp = rows
            .iter()
            .map(|r| {
                let mut acc = hp.zero();
                for p in r {
                    if !p.is_zero() {
                        let l = hp.ln(p);
                        acc = hp.add(&acc, &hp.mul(p, &l));
                    }
                }
                acc
            })
            .collect();
        HpChannel { rows, plogp }
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn to_channel(&self) -> Result<ChannelMatrix> {
        ChannelMatrix::new_renormalized(self.rows.iter().map(|r| r.iter().map(to_f64).collect()).collect())
    }

    pub fn output(&self, hp: &Hp, lambda: &[BigFloat]) -> Vec<BigFloat> {
        (0..self.n())
            .map(|j| {
                let mut acc = hp.zero();
                for (l, r) in lambda.iter().zip(&self.rows) {
                    if !l.is_zero() {
                        acc = hp.add(&acc, &hp.mul(l, &r[j]));
                    }
                }
                acc
            })
            .collect()
    }

    /// D_i = D(P^i‖λΦ) for every row.
    pub fn divergences(&self, hp: &mut Hp, lambda: &[BigFloat]) -> Result<Vec<BigFloat>> {
        let q = self.output(hp, lambda);
        let lnq = q
            .iter()
            .enumerate()
            .map(|(j, x)| {
                if x.is_positive() && !x.is_zero() {
                    Ok(hp.ln(x))
                } else {
                    Err(Error::Domain(format!("output probability Q_{} is not positive", j + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .rows
            .iter()
            .zip(&self.plogp)
            .map(|(r, pl)| {
                let mut cross = hp.zero();
                for (p, l) in r.iter().zip(&lnq) {
                    if !p.is_zero() {
                        cross = hp.add(&cross, &hp.mul(p, l));
                    }
                }
                hp.sub(pl, &cross)
            })
            .collect())
    }

    /// One step of the iteration. Returns λ′ and I(λ,Φ) = Σ λ_i D_i.
    pub fn step(&self, hp: &mut Hp, lambda: &[BigFloat]) -> Result<(Vec<BigFloat>, BigFloat)> {
        let d = self.divergences(hp, lambda)?;
        let mut w = Vec::with_capacity(lambda.len());
        let mut mi = hp.zero();
        for (l, di) in lambda.iter().zip(&d) {
            if l.is_zero() {
                w.push(hp.zero());
            } else {
                mi = hp.add(&mi, &hp.mul(l, di));
                let e = hp.exp(di);
                w.push(hp.mul(l, &e));
            }
        }
        let s = hp.sum(&w);
        Ok((w.iter().map(|x| hp.div(x, &s)).collect(), mi))
    }

    pub fn mutual_information(&self, hp: &mut Hp, lambda: &[BigFloat]) -> Result<BigFloat> {
        let d = self.divergences(hp, lambda)?;
        let mut mi = hp.zero();
        for (l, di) in lambda.iter().zip(&d) {
            if !l.is_zero() {
                mi = hp.add(&mi, &hp.mul(l, di));
            }
        }
        Ok(mi)
    }
}

/// Polish an approximate fixed point on the given support.
///
/// Newton steps δ(I − J^I) = F(λ) − λ with the Jacobian formed in `f64`;
/// each step gains roughly the accuracy of that Jacobian, so a handful of
/// extended-precision evaluations suffice. Falls back to plain iteration
/// when the Newton residual stops shrinking.
pub fn refine_fixed_point(
    hp: &mut Hp,
    ch: &HpChannel,
    support: &[usize],
    start: &[f64],
    max_evals: usize,
) -> Result<Vec<BigFloat>> {
    let m = ch.m();
    let s_mass: f64 = support.iter().map(|&i| start[i]).sum();
    if support.is_empty() || !(s_mass > 0.0) {
        return Err(Error::Validation("refinement needs a support with positive mass".into()));
    }
    let mut lam: Vec<BigFloat> = (0..m)
        .map(|i| if support.contains(&i) { hp.from_f64(start[i] / s_mass) } else { hp.zero() })
        .collect();
    // f64 copy of I − J on the support: B_{i′i} = λ_i Σ_j P^{i′}_j P^i_j / Q_j.
    let phi = ch.to_channel()?;
    let lam_f: Vec<f64> = lam.iter().map(to_f64).collect();
    let q = crate::channel::output_vector(&lam_f, &phi)?;
    let k = support.len();
    let b = Matrix::from_fn(k, k, |a, c| {
        let (ip, i) = (support[a], support[c]);
        lam_f[i] * (0..phi.n()).map(|j| phi.get(ip, j) * phi.get(i, j) / q[j]).sum::<f64>()
    });
    // Row-vector convention: δB = r  ⇔  ᵗB ᵗδ = ᵗr.
    let bt = b.transpose();
    let target = hp.from_f64(2f64.powi(-(hp.bits() as i32 - 16)));
    let mut last = f64::INFINITY;
    for _ in 0..max_evals {
        let (next, _) = ch.step(hp, &lam)?;
        let step = hp.dist(&next, &lam);
        if step.cmp(&target).is_some_and(|c| c <= 0) {
            return Ok(next);
        }
        let step_f = to_f64(&step);
        let newton = step_f < 0.5 * last;
        last = step_f;
        let r: Vec<f64> = support.iter().map(|&i| to_f64(&hp.sub(&next[i], &lam[i]))).collect();
        match numerics::lin_solve(&bt, &r) {
            Ok(delta) if newton => {
                for (a, &i) in support.iter().enumerate() {
                    lam[i] = hp.add(&lam[i], &hp.from_f64(delta[a]));
                }
                let s = hp.sum(&lam);
                lam = lam.iter().map(|x| hp.div(x, &s)).collect();
            }
            _ => lam = next,
        }
    }
    Err(Error::NoConvergence { what: "fixed-point refinement", iterations: max_evals })
}
