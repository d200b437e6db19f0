//! Convergence traces, regime prediction and mutual-information gap rates.

use astro_float::BigFloat;
use serde::Serialize;

use crate::analysis::{self, BmaxTests, SpectralReport};
use crate::arimoto::{FixedPointReport, Provenance};
use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::hp::{self, Hp, HpChannel};
use crate::recurrence::ReducedModel;

/// Off-support divergence gaps and support masses below this are flagged.
pub const DEGENERACY_NATS: f64 = 1e-2;
pub const DEGENERACY_MASS: f64 = 1e-2;
/// Gaps this small count as exactly equalized.
const EXACT_GAP: f64 = 1e-10;

/// Initial distribution for a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Uniform,
    /// Entries as decimals or fractions `p/q`; scaled to sum to 1.
    Exact(Vec<String>),
}

impl Init {
    /// `uniform`, or a comma-separated list such as `1/2,1/3,1/6` or `0.2,0.3,0.5`.
    pub fn parse(s: &str) -> Result<Init> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(Init::Uniform);
        }
        let items: Vec<String> = s.split(',').map(|x| x.trim().to_string()).collect();
        for it in &items {
            let ok = match it.split_once('/') {
                Some((a, b)) => a.parse::<f64>().is_ok() && b.parse::<f64>().is_ok_and(|b| b != 0.0),
                None => it.parse::<f64>().is_ok(),
            };
            if !ok {
                return Err(Error::Validation(format!("bad initial-distribution entry '{it}'")));
            }
        }
        Ok(Init::Exact(items))
    }

    pub fn from_f64(v: &[f64]) -> Init {
        Init::Exact(v.iter().map(|x| format!("{x}")).collect())
    }

    pub fn to_f64(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            Init::Uniform => Ok(vec![1.0 / m as f64; m]),
            Init::Exact(items) => {
                if items.len() != m {
                    return Err(Error::Dimension { what: "initial distribution", expected: m, got: items.len() });
                }
                let v: Vec<f64> = items
                    .iter()
                    .map(|it| match it.split_once('/') {
                        Some((a, b)) => a.parse::<f64>().unwrap_or(f64::NAN) / b.parse::<f64>().unwrap_or(f64::NAN),
                        None => it.parse().unwrap_or(f64::NAN),
                    })
                    .collect();
                let s: f64 = v.iter().sum();
                Ok(v.into_iter().map(|x| x / s).collect())
            }
        }
    }

    fn to_hp(&self, h: &mut Hp, m: usize) -> Result<Vec<BigFloat>> {
        let v: Vec<BigFloat> = match self {
            Init::Uniform => {
                let mm = h.from_f64(m as f64);
                let one = h.one();
                vec![h.div(&one, &mm); m]
            }
            Init::Exact(items) => {
                if items.len() != m {
                    return Err(Error::Dimension { what: "initial distribution", expected: m, got: items.len() });
                }
                let mut v = Vec::with_capacity(m);
                for it in items {
                    v.push(match it.split_once('/') {
                        Some((a, b)) => {
                            let a = h.parse(a)?;
                            let b = h.parse(b)?;
                            h.div(&a, &b)
                        }
                        None => h.parse(it)?,
                    });
                }
                let s = h.sum(&v);
                v.iter().map(|x| h.div(x, &s)).collect()
            }
        };
        if v.iter().any(|x| !x.is_positive() || x.is_zero()) {
            return Err(Error::Validation("trace initial distribution must be interior (all entries > 0)".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub norm_mu: f64,
    pub ln_norm_mu: f64,
    /// −(1/N) ln‖μ^N‖; undefined at N = 0.
    pub l_n: Option<f64>,
    pub n_mu: Vec<f64>,
    pub mi: f64,
    pub gap: f64,
    pub ln_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    pub channel: Vec<Vec<f64>>,
    pub init: Init,
    pub lambda_star: Vec<f64>,
    pub lambda_star_provenance: Provenance,
    pub capacity: f64,
    pub precision_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn row(&self, n: usize) -> Result<&TraceRow> {
        self.rows
            .get(n)
            .ok_or_else(|| Error::Validation(format!("trace has {} steps, N = {n} requested", self.rows.len() - 1)))
    }

    pub fn lambdas(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.lambda.clone()).collect()
    }

    /// Gap stays positive at every step.
    pub fn gap_positive(&self) -> bool {
        self.rows.iter().all(|r| r.gap > 0.0 || r.ln_gap.is_finite())
    }
}

/// Iterate at extended precision from `init` for `steps` steps.
///
/// λ* is taken from `fp` and polished on its type-I support at the working
/// precision; pruning never happens here.
pub fn run_trace(
    tokens: &[Vec<String>],
    init: &Init,
    fp: &FixedPointReport,
    steps: usize,
    bits: usize,
) -> Result<ConvergenceTrace> {
    let mut h = Hp::new(bits)?;
    let ch = HpChannel::from_decimal(&mut h, tokens)?;
    let m = ch.m();
    if fp.m() != m {
        return Err(Error::Dimension { what: "fixed point", expected: m, got: fp.m() });
    }
    let lam_star = hp::refine_fixed_point(&mut h, &ch, &fp.type1, &fp.lambda_star, 10_000)?;
    let cap = ch.mutual_information(&mut h, &lam_star)?;
    let mut lam = init.to_hp(&mut h, m)?;
    let mut rows = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let (next, mi) = ch.step(&mut h, &lam)?;
        let mu: Vec<BigFloat> = lam.iter().zip(&lam_star).map(|(a, b)| h.sub(a, b)).collect();
        let norm = h.dist(&lam, &lam_star);
        let gap = h.sub(&cap, &mi);
        let ln_norm = hp::ln_abs_f64(&norm);
        let mu_f: Vec<f64> = mu.iter().map(hp::to_f64).collect();
        rows.push(TraceRow {
            n,
            lambda: lam.iter().map(hp::to_f64).collect(),
            n_mu: mu_f.iter().map(|x| n as f64 * x).collect(),
            mu: mu_f,
            norm_mu: hp::to_f64(&norm),
            ln_norm_mu: ln_norm,
            l_n: (n > 0).then(|| -ln_norm / n as f64),
            mi: hp::to_f64(&mi),
            gap: hp::to_f64(&gap),
            ln_gap: if gap.is_positive() && !gap.is_zero() { hp::ln_abs_f64(&gap) } else { f64::NAN },
        });
        lam = next;
    }
    let phi = ch.to_channel()?;
    Ok(ConvergenceTrace {
        meta: TraceMeta {
            channel: phi.rows().to_vec(),
            init: init.clone(),
            lambda_star: lam_star.iter().map(hp::to_f64).collect(),
            lambda_star_provenance: fp.provenance,
            capacity: hp::to_f64(&cap),
            precision_bits: bits,
        },
        rows,
    })
}

/// One trace request for [`run_traces`].
#[derive(Debug, Clone)]
pub struct TraceJob {
    pub tokens: Vec<Vec<String>>,
    pub init: Init,
    pub fp: FixedPointReport,
    pub steps: usize,
    pub bits: usize,
}

/// Independent traces, run concurrently when the `parallel` feature is on.
pub fn run_traces(jobs: &[TraceJob]) -> Vec<Result<ConvergenceTrace>> {
    crate::sweep::map(jobs, |j| run_trace(&j.tokens, &j.init, &j.fp, j.steps, j.bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Exponential,
    OneOverN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBasis {
    ThetaMax,
    ThetaSec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MiPrediction {
    /// C − I < K θ^{2N}.
    TwiceStateRate { rate: f64 },
    /// lim N²(C − I).
    NSquared { constant: f64 },
    /// Same order as the state: θ^N when `rate` is set, 1/N otherwise.
    SameAsState { rate: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimePrediction {
    pub kind: RegimeKind,
    /// −ln θ for the exponential regime.
    pub rate: Option<f64>,
    pub theta: Option<f64>,
    pub basis: Option<RateBasis>,
    /// θ_max sits in the type-III block, so no initial point speeds things up.
    pub initial_independent: bool,
    /// lim N·μ^N in the O(1/N) regime.
    pub limits: Option<Vec<f64>>,
    pub bmax: Option<BmaxTests>,
    pub near_degenerate: bool,
    pub warnings: Vec<String>,
}

/// Indices whose classification is numerically delicate.
pub fn degeneracy_warnings(fp: &FixedPointReport) -> Vec<String> {
    let mut w = Vec::new();
    for i in 0..fp.m() {
        let gap = fp.capacity - fp.divergences[i];
        if fp.type1.contains(&i) {
            if fp.lambda_star[i] < DEGENERACY_MASS {
                w.push(format!(
                    "near-degenerate: input {} carries only {:.3e} mass at the fixed point (type-I/II boundary)",
                    i + 1,
                    fp.lambda_star[i]
                ));
            }
        } else if gap.abs() > EXACT_GAP && gap.abs() < DEGENERACY_NATS {
            w.push(format!(
                "near-degenerate: input {} has zero mass but |C - D| = {:.3e} nats, so its type depends on the tolerance",
                i + 1,
                gap.abs()
            ));
        }
    }
    w
}

pub fn predict_regime(
    fp: &FixedPointReport,
    spectral: &SpectralReport,
    model: Option<&ReducedModel>,
    mu0: Option<&[f64]>,
) -> RegimePrediction {
    let warnings = degeneracy_warnings(fp);
    let near_degenerate = !warnings.is_empty();
    if fp.type2.is_empty() {
        let bmax = mu0.map(|mu| analysis::bmax_tests(spectral, mu));
        let upgrade = !spectral.theta_max_in_type3
            && bmax.as_ref().is_some_and(|b| b.is_right_eigenvector && b.orthogonal);
        let (theta, basis) = if upgrade {
            (spectral.theta_sec, RateBasis::ThetaSec)
        } else {
            (spectral.theta_max, RateBasis::ThetaMax)
        };
        RegimePrediction {
            kind: RegimeKind::Exponential,
            rate: Some(-theta.ln()),
            theta: Some(theta),
            basis: Some(basis),
            initial_independent: spectral.theta_max_in_type3,
            limits: None,
            bmax,
            near_degenerate,
            warnings,
        }
    } else {
        RegimePrediction {
            kind: RegimeKind::OneOverN,
            rate: None,
            theta: None,
            basis: None,
            initial_independent: false,
            limits: model.map(|m| m.limits_full.clone()),
            bmax: None,
            near_degenerate,
            warnings,
        }
    }
}

/// ½ Σ_j (Σ_i L_i P^i_j)² / Q*_j for the limit vector L.
pub fn n_squared_constant(phi: &ChannelMatrix, q_star: &[f64], limits: &[f64]) -> f64 {
    0.5 * (0..phi.n())
        .map(|j| {
            let s: f64 = limits.iter().enumerate().map(|(i, l)| l * phi.get(i, j)).sum();
            s * s / q_star[j]
        })
        .sum::<f64>()
}

pub fn mi_gap_rate(
    fp: &FixedPointReport,
    prediction: &RegimePrediction,
    model: Option<&ReducedModel>,
    phi: &ChannelMatrix,
) -> Result<MiPrediction> {
    if !fp.type3.is_empty() {
        return Ok(MiPrediction::SameAsState { rate: prediction.rate });
    }
    match prediction.kind {
        RegimeKind::Exponential => Ok(MiPrediction::TwiceStateRate {
            rate: 2.0 * prediction.rate.expect("exponential predictions carry a rate"),
        }),
        RegimeKind::OneOverN => {
            let m = model.ok_or_else(|| Error::Validation("σ is required for the O(1/N) gap constant".into()))?;
            let q: Vec<f64> = crate::channel::output_vector(
                &(0..fp.m()).map(|i| if fp.type1.contains(&i) { fp.lambda_star[i] } else { 0.0 }).collect::<Vec<_>>(),
                phi,
            )?;
            Ok(MiPrediction::NSquared { constant: n_squared_constant(phi, &q, &m.limits_full) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalRate {
    pub n: usize,
    pub l_n: f64,
    /// −(1/N) ln(C − I).
    pub gap_rate: f64,
    pub n_mu: Vec<f64>,
    /// N²(C − I).
    pub n2_gap: f64,
}

/// Point statistics at N = `n`.
pub fn fit_empirical_rate(trace: &ConvergenceTrace, n: usize) -> Result<EmpiricalRate> {
    if n == 0 {
        return Err(Error::Validation("rates need N ≥ 1".into()));
    }
    let r = trace.row(n)?;
    Ok(EmpiricalRate {
        n,
        l_n: r.l_n.expect("N ≥ 1"),
        gap_rate: -r.ln_gap / n as f64,
        n_mu: r.n_mu.clone(),
        n2_gap: (n as f64).powi(2) * r.gap,
    })
}

/// Least-squares slope of −ln‖μ^N‖ over N ∈ [from, to].
pub fn fit_regression(trace: &ConvergenceTrace, from: usize, to: usize) -> Result<f64> {
    if from >= to {
        return Err(Error::Validation("regression window is empty".into()));
    }
    trace.row(to)?;
    let pts: Vec<(f64, f64)> = (from..=to).map(|n| (n as f64, -trace.rows[n].ln_norm_mu)).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
