//! Subcommand bodies. Each returns a JSON document (with `schema: 1`) or a
//! trace; `main` decides where the bytes go.

use std::io::Write;

use abrate::analysis::{analyze as run_analysis, bmax_tests, Analysis};
use abrate::arimoto::{analyze_at, solve_capacity, ClassTol, FixedPointReport, IterationSettings};
use abrate::channel::InputDistribution;
use abrate::recurrence::{reduced_model_for, ReducedModel};
use abrate::speed::{self, ConvergenceTrace, Init, MiPrediction, RegimePrediction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult, Context};
use crate::input::LoadedMatrix;
use crate::svg::{self, Series};

pub const SCHEMA: u32 = 1;
pub const DEFAULT_BITS: usize = 512;

/// Fixed-point source: the solver, or a user-supplied λ* classified leniently.
#[derive(Debug, Clone)]
pub struct FixedPointSource {
    pub at: Option<Vec<f64>>,
    pub settings: IterationSettings,
    pub class_tol: ClassTol,
}

impl FixedPointSource {
    pub fn solve(&self, mat: &LoadedMatrix) -> CliResult<FixedPointReport> {
        match &self.at {
            Some(l) => {
                let l = InputDistribution::new(l.clone()).ctx("--at")?;
                analyze_at(&mat.channel, &l, self.class_tol).ctx("--at")
            }
            None => {
                self.settings.validate().ctx("solver settings")?;
                let fp = solve_capacity(&mat.channel, &self.settings).ctx(&mat.source)?;
                if !fp.converged {
                    return Err(CliError::Numerical(format!(
                        "{}: not converged after {} iterations (Kuhn-Tucker residual {:.3e}); raise --iters or relax --tol",
                        mat.source, fp.iterations, fp.kt_residual
                    )));
                }
                Ok(fp)
            }
        }
    }
}

pub fn capacity(mat: &LoadedMatrix, src: &FixedPointSource) -> CliResult<Value> {
    let fp = src.solve(mat)?;
    Ok(json!({ "schema": SCHEMA, "source": mat.source, "fixed_point": fp }))
}

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub fixed_point: FixedPointReport,
    pub analysis: Analysis,
    pub reduced_model: Option<ReducedModel>,
    pub regime: RegimePrediction,
    pub mi_prediction: Option<MiPrediction>,
    /// Structured failures of optional stages (diagonalization, reduction).
    pub errors: Vec<String>,
}

pub fn bundle(mat: &LoadedMatrix, src: &FixedPointSource, mu0: Option<&[f64]>) -> CliResult<Bundle> {
    let fp = src.solve(mat)?;
    let an = run_analysis(&fp, &mat.channel).ctx("analysis")?;
    let mut errors = Vec::new();
    if let Some(e) = &an.diagonalization_error {
        errors.push(format!("diagonalization: {e}"));
    }
    let model = if fp.type2.is_empty() || an.spectral.diagonalization.is_none() {
        None
    } else {
        match reduced_model_for(&fp, &an) {
            Ok(m) => Some(m),
            Err(e) => {
                errors.push(format!("reduced model: {e}"));
                None
            }
        }
    };
    let regime = speed::predict_regime(&fp, &an.spectral, model.as_ref(), mu0);
    let mi_prediction = match speed::mi_gap_rate(&fp, &regime, model.as_ref(), &mat.channel) {
        Ok(p) => Some(p),
        Err(e) => {
            errors.push(format!("mi prediction: {e}"));
            None
        }
    };
    Ok(Bundle { fixed_point: fp, analysis: an, reduced_model: model, regime, mi_prediction, errors })
}

/// Warnings worth printing on stderr for a bundle.
pub fn warnings(b: &Bundle, at_given: bool) -> Vec<String> {
    let mut w = b.regime.warnings.clone();
    if b.regime.near_degenerate && !at_given {
        w.push("the classification above came from the solver; rerun with --at <fixed point> to analyze the intended type structure".into());
    }
    w
}

pub fn analyze(mat: &LoadedMatrix, src: &FixedPointSource) -> CliResult<(Value, Vec<String>)> {
    let b = bundle(mat, src, None)?;
    let w = warnings(&b, src.at.is_some());
    let v = json!({ "schema": SCHEMA, "source": mat.source, "warnings": w, "bundle": b });
    Ok((v, w))
}

/// μ⁰ = λ⁰ − λ* for the b_max tests.
fn initial_deviation(init: &Init, fp: &FixedPointReport) -> CliResult<Vec<f64>> {
    let l0 = init.to_f64(fp.m()).ctx("--init")?;
    Ok(l0.iter().zip(&fp.lambda_star).map(|(a, b)| a - b).collect())
}

pub fn predict(mat: &LoadedMatrix, src: &FixedPointSource, init: Option<&Init>) -> CliResult<(Value, Vec<String>)> {
    let fp = src.solve(mat)?;
    let mu0 = init.map(|i| initial_deviation(i, &fp)).transpose()?;
    let b = bundle(mat, src, mu0.as_deref())?;
    let bmax = mu0.as_deref().map(|mu| bmax_tests(&b.analysis.spectral, mu));
    let w = warnings(&b, src.at.is_some());
    let v = json!({
        "schema": SCHEMA,
        "source": mat.source,
        "warnings": w,
        "regime": b.regime,
        "mi_prediction": b.mi_prediction,
        "bmax_tests": bmax,
        "errors": b.errors,
    });
    Ok((v, w))
}

pub fn trace(
    mat: &LoadedMatrix,
    src: &FixedPointSource,
    init: &Init,
    steps: usize,
    bits: usize,
) -> CliResult<ConvergenceTrace> {
    let fp = src.solve(mat)?;
    speed::run_trace(&mat.tokens, init, &fp, steps, bits).ctx("trace")
}

pub fn trace_json(trace: &ConvergenceTrace, source: &str) -> Value {
    json!({ "schema": SCHEMA, "source": source, "trace": trace })
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// CSV columns: N, lambda_i, mu_i, norm_mu, L_N, Nmu_i, mi, gap.
pub fn write_trace_csv<W: Write>(trace: &ConvergenceTrace, w: W) -> CliResult<()> {
    let m = trace.meta.lambda_star.len();
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["N".to_string()];
    header.extend((1..=m).map(|i| format!("lambda_{i}")));
    header.extend((1..=m).map(|i| format!("mu_{i}")));
    header.push("norm_mu".into());
    header.push("L_N".into());
    header.extend((1..=m).map(|i| format!("Nmu_{i}")));
    header.push("mi".into());
    header.push("gap".into());
    let io = |e: csv::Error| CliError::Validation(format!("writing trace CSV: {e}"));
    wr.write_record(&header).map_err(io)?;
    for r in &trace.rows {
        let mut rec = vec![r.n.to_string()];
        rec.extend(r.lambda.iter().map(|&x| num(x)));
        rec.extend(r.mu.iter().map(|&x| num(x)));
        rec.push(num(r.norm_mu));
        rec.push(r.l_n.map(num).unwrap_or_default());
        rec.extend(r.n_mu.iter().map(|&x| num(x)));
        rec.push(num(r.mi));
        rec.push(num(r.gap));
        wr.write_record(&rec).map_err(io)?;
    }
    wr.flush().map_err(|e| CliError::Validation(format!("writing trace CSV: {e}")))
}

/// Series from a trace CSV: exact column names, or a prefix such as `Nmu`.
pub fn series_from_csv(text: &str, wanted: &str, log_y: bool) -> CliResult<Vec<Series>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| CliError::Validation(format!("trace CSV: {e}")))?.clone();
    let n_col = headers
        .iter()
        .position(|h| h == "N")
        .ok_or_else(|| CliError::Validation("trace CSV: missing column 'N'".into()))?;
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| *h == wanted || h.strip_prefix(wanted).is_some_and(|r| r.starts_with('_')))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(CliError::Validation(format!(
            "--series: no column named '{wanted}' (have: {})",
            headers.iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut series: Vec<Series> =
        cols.iter().map(|&c| Series { name: headers[c].to_string(), points: Vec::new() }).collect();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("trace CSV line {}: {e}", line + 2)))?;
        let x: f64 = rec[n_col]
            .parse()
            .map_err(|_| CliError::Validation(format!("trace CSV line {}: bad N '{}'", line + 2, &rec[n_col])))?;
        for (s, &c) in series.iter_mut().zip(&cols) {
            let y = rec[c].parse::<f64>().unwrap_or(f64::NAN);
            let y = if log_y { if y > 0.0 { y.log10() } else { f64::NAN } } else { y };
            s.points.push((x, y));
        }
    }
    Ok(series)
}

pub fn plot(text: &str, wanted: &str, log_y: bool, title: &str) -> CliResult<String> {
    let series = series_from_csv(text, wanted, log_y)?;
    let y = if log_y { format!("log10 {wanted}") } else { wanted.to_string() };
    Ok(svg::line_chart(title, "N", &y, &series))
}

/// L(N) for exponential traces, N·μ otherwise.
pub fn trace_chart(trace: &ConvergenceTrace, title: &str, one_over_n: bool) -> String {
    let series: Vec<Series> = if one_over_n {
        (0..trace.meta.lambda_star.len())
            .map(|i| Series {
                name: format!("N·μ_{}", i + 1),
                points: trace.rows.iter().skip(1).map(|r| (r.n as f64, r.n_mu[i])).collect(),
            })
            .collect()
    } else {
        vec![Series {
            name: "L(N)".into(),
            points: trace.rows.iter().filter_map(|r| r.l_n.map(|l| (r.n as f64, l))).collect(),
        }]
    };
    svg::line_chart(title, "N", if one_over_n { "N·μ^N" } else { "L(N)" }, &series)
}
