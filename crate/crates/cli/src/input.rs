//! Reading matrices, distributions and initial points from files or inline text.

use std::fs;
use std::path::Path;

use abrate::channel::{parse_matrix, ChannelMatrix};
use abrate::paper::Builtin;
use abrate::speed::Init;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct LoadedMatrix {
    pub channel: ChannelMatrix,
    /// Entries exactly as written, for extended-precision use.
    pub tokens: Vec<Vec<String>>,
    pub source: String,
}

fn builtin_names() -> String {
    Builtin::ALL.iter().map(|b| b.name()).collect::<Vec<_>>().join(", ")
}

/// A matrix file, or the name of a built-in channel when no such file exists.
pub fn load_matrix(arg: &str) -> CliResult<LoadedMatrix> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("matrix file '{arg}': {e}")))?;
        let parsed = parse_matrix(&text).map_err(|e| CliError::Validation(format!("matrix file '{arg}': {e}")))?;
        return Ok(LoadedMatrix { channel: parsed.channel, tokens: parsed.tokens, source: arg.to_string() });
    }
    match Builtin::from_name(arg) {
        Some(b) => Ok(LoadedMatrix { channel: b.channel(), tokens: b.tokens(), source: format!("builtin:{}", b.name()) }),
        None => Err(CliError::Validation(format!(
            "matrix '{arg}': no such file, and not a built-in channel ({})",
            builtin_names()
        ))),
    }
}

fn parse_number(flag: &str, item: &str) -> CliResult<f64> {
    let v = match item.split_once('/') {
        Some((a, b)) => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) if b != 0.0 => Some(a / b),
            _ => None,
        },
        None => item.parse::<f64>().ok(),
    };
    v.filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Validation(format!("{flag}: cannot read '{item}' as a number")))
}

fn read_or_inline(flag: &str, arg: &str) -> CliResult<String> {
    let path = Path::new(arg);
    if path.is_file() {
        fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{flag} file '{arg}': {e}")))
    } else {
        Ok(arg.to_string())
    }
}

fn split_items(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// A probability vector from a file or an inline comma list (fractions allowed).
pub fn load_vector(flag: &str, arg: &str, m: usize) -> CliResult<Vec<f64>> {
    let text = read_or_inline(flag, arg)?;
    let items = split_items(&text);
    if items.len() != m {
        return Err(CliError::Validation(format!("{flag}: expected {m} entries, found {}", items.len())));
    }
    items.iter().map(|s| parse_number(flag, s)).collect()
}

/// `uniform`, an inline list, or a file holding the list.
pub fn load_init(arg: &str, m: usize) -> CliResult<Init> {
    let text = read_or_inline("--init", arg)?;
    if text.trim().eq_ignore_ascii_case("uniform") {
        return Ok(Init::Uniform);
    }
    let items = split_items(&text);
    if items.len() != m {
        return Err(CliError::Validation(format!("--init: expected {m} entries, found {}", items.len())));
    }
    for it in &items {
        let x = parse_number("--init", it)?;
        if x <= 0.0 {
            return Err(CliError::Validation(format!(
                "--init: entry '{it}' must be positive (traces start in the interior)"
            )));
        }
    }
    Init::parse(&items.join(",")).map_err(|e| CliError::Validation(format!("--init: {e}")))
}
