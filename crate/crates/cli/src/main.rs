use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abrate::arimoto::{ClassTol, IterationSettings};
use abrate_cli::commands::{self, FixedPointSource, DEFAULT_BITS};
use abrate_cli::input::{load_init, load_matrix, load_vector};
use abrate_cli::reproduce::{self, Target};
use abrate_cli::{CliError, CliResult};
use clap::{Args, Parser, Subcommand};

/// Blahut-Arimoto capacity, fixed-point analysis and convergence-speed tools.
#[derive(Parser)]
#[command(name = "abrate", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Stop when successive iterates differ by less than this (max norm).
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    /// Iteration cap for the capacity solver.
    #[arg(long, default_value_t = 1_000_000)]
    iters: usize,
}

#[derive(Args, Clone)]
struct FixedPointArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// Use this fixed point (file or comma list) instead of solving.
    #[arg(long)]
    at: Option<String>,
    /// Divergence tolerance (nats) for classifying indices at --at.
    #[arg(long)]
    class_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the capacity-achieving input distribution.
    Capacity {
        /// Matrix file, or a built-in channel name (phi1..phi5, phi2-equalized, phi5-equalized).
        matrix: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jacobian, eigenstructure, Hessian, reduced model and regime at λ*.
    Analyze {
        matrix: String,
        #[command(flatten)]
        fp: FixedPointArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted convergence regime and mutual-information gap behaviour.
    Predict {
        matrix: String,
        #[command(flatten)]
        fp: FixedPointArgs,
        /// Initial distribution, for the b_max tests.
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterate at extended precision and record per-step statistics.
    Trace {
        matrix: String,
        #[command(flatten)]
        fp: FixedPointArgs,
        /// `uniform`, a comma list (fractions allowed) or a file.
        #[arg(long, default_value = "uniform")]
        init: String,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Working precision in bits.
        #[arg(long, default_value_t = DEFAULT_BITS)]
        bits: usize,
        /// CSV destination (stdout when neither --csv nor --out is given).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// SVG chart of L(N), or N·μ^N when type-II indices exist.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// JSON with metadata and all rows.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the reference numbers and compare (example1..8, table1..3, all).
    Reproduce {
        target: String,
        /// Run up to this many targets concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory for trace CSVs.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Directory for SVG charts.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// JSON summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chart columns of a trace CSV.
    Plot {
        trace: PathBuf,
        /// Column name or prefix (L_N, Nmu, gap, norm_mu, ...).
        #[arg(long, default_value = "L_N")]
        series: String,
        /// Plot log10 of the values.
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn write_out(path: Option<&Path>, flag: &str, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Validation(format!("{flag} '{}': {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Validation(format!("stdout: {e}")))
        }
    }
}

fn json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn source(fp: &FixedPointArgs, m: usize) -> CliResult<FixedPointSource> {
    let settings = IterationSettings { fixed_point_tol: fp.solver.tol, max_iters: fp.solver.iters, ..Default::default() };
    if fp.class_tol.is_some() && fp.at.is_none() {
        return Err(CliError::Validation("--class-tol only applies together with --at".into()));
    }
    let mut class_tol = ClassTol::ANALYZE;
    if let Some(t) = fp.class_tol {
        if !(t > 0.0) {
            return Err(CliError::Validation(format!("--class-tol must be positive, got {t}")));
        }
        class_tol.nats = t;
    }
    let at = fp.at.as_deref().map(|a| load_vector("--at", a, m)).transpose()?;
    Ok(FixedPointSource { at, settings, class_tol })
}

fn ensure_dir(flag: &str, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("{flag} '{}': {e}", dir.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Capacity { matrix, solver, out } => {
            let mat = load_matrix(&matrix)?;
            let src = source(&FixedPointArgs { solver, at: None, class_tol: None }, mat.channel.m())?;
            write_out(out.as_deref(), "--out", &json(&commands::capacity(&mat, &src)?))
        }
        Cmd::Analyze { matrix, fp, out } => {
            let mat = load_matrix(&matrix)?;
            let src = source(&fp, mat.channel.m())?;
            let (v, warnings) = commands::analyze(&mat, &src)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            write_out(out.as_deref(), "--out", &json(&v))
        }
        Cmd::Predict { matrix, fp, init, out } => {
            let mat = load_matrix(&matrix)?;
            let src = source(&fp, mat.channel.m())?;
            let init = init.as_deref().map(|i| load_init(i, mat.channel.m())).transpose()?;
            let (v, warnings) = commands::predict(&mat, &src, init.as_ref())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            write_out(out.as_deref(), "--out", &json(&v))
        }
        Cmd::Trace { matrix, fp, init, steps, bits, csv, svg, out } => {
            let mat = load_matrix(&matrix)?;
            let src = source(&fp, mat.channel.m())?;
            let init = load_init(&init, mat.channel.m())?;
            let tr = commands::trace(&mat, &src, &init, steps, bits)?;
            if let Some(p) = &out {
                write_out(Some(p), "--out", &json(&commands::trace_json(&tr, &mat.source)))?;
            }
            if let Some(p) = &svg {
                let one_over_n = src.solve(&mat)?.m2 > 0;
                write_out(Some(p), "--svg", &commands::trace_chart(&tr, &mat.source, one_over_n))?;
            }
            match (&csv, &out) {
                (Some(p), _) => {
                    let f = fs::File::create(p).map_err(|e| CliError::Validation(format!("--csv '{}': {e}", p.display())))?;
                    commands::write_trace_csv(&tr, io::BufWriter::new(f))
                }
                (None, None) => commands::write_trace_csv(&tr, io::stdout().lock()),
                _ => Ok(()),
            }
        }
        Cmd::Reproduce { target, jobs, csv, svg, out } => {
            let targets = Target::parse(&target).ok_or_else(|| {
                CliError::Validation(format!("reproduce: unknown target '{target}' (example1..example8, table1..table3, all)"))
            })?;
            let reports = reproduce::run_all(&targets, jobs.max(1));
            print!("{}", reproduce::format_table(&reports));
            if let Some(dir) = &csv {
                ensure_dir("--csv", dir)?;
                for r in &reports {
                    for t in &r.traces {
                        let p = dir.join(format!("{}-{}.csv", r.target, t.name));
                        let f = fs::File::create(&p)
                            .map_err(|e| CliError::Validation(format!("--csv '{}': {e}", p.display())))?;
                        commands::write_trace_csv(&t.trace, io::BufWriter::new(f))?;
                    }
                }
            }
            if let Some(dir) = &svg {
                ensure_dir("--svg", dir)?;
                for r in &reports {
                    for t in &r.traces {
                        let p = dir.join(format!("{}-{}.svg", r.target, t.name));
                        let title = format!("{} {}", r.target, t.name);
                        write_out(Some(&p), "--svg", &commands::trace_chart(&t.trace, &title, t.one_over_n))?;
                    }
                }
            }
            if let Some(p) = &out {
                write_out(Some(p), "--out", &json(&serde_json::json!({ "schema": commands::SCHEMA, "targets": reports })))?;
            }
            let bad: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.target.as_str()).collect();
            if bad.is_empty() {
                Ok(())
            } else {
                Err(CliError::Mismatch(format!("reproduction mismatch in: {}", bad.join(", "))))
            }
        }
        Cmd::Plot { trace, series, log_y, svg } => {
            let text = fs::read_to_string(&trace)
                .map_err(|e| CliError::Validation(format!("trace file '{}': {e}", trace.display())))?;
            let title = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            write_out(svg.as_deref(), "--svg", &commands::plot(&text, &series, log_y, &title)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
