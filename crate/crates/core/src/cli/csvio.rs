//! CSV emission and the dataset file format.
//!
//! Derived quantities are printed with 9 significant digits. Dataset
//! coordinates use the shortest representation that parses back to the same
//! `f64`, so datasets round-trip exactly.

use crate::domain::{Mode, PreferenceDataset, PreferenceRecord, Snapshot};
use crate::error::{MopoError, Result};
use std::path::Path;

/// Header of the front export.
pub const FRONT_COLUMNS: &[&str] = &["w", "r1", "r2"];
/// Header of every metrics file.
pub const METRICS_COLUMNS: &[&str] = &[
    "run_id",
    "dominated_distance",
    "kl_to_ref",
    "win_rate_1",
    "win_rate_2",
    "reward_1",
    "reward_2",
];
/// Header of the COP sweep export.
pub const COP_COLUMNS: &[&str] = &["b", "r1", "r2", "infeasible_bins"];
/// Header of a policy export.
pub const POLICY_COLUMNS: &[&str] = &["row", "col", "logit", "prob"];

/// History header for `n_actions` action marginals and `kq` constraints.
pub fn history_columns(n_actions: usize, kq: usize) -> Vec<String> {
    let mut c = vec!["step".to_string(), "seed".to_string()];
    c.extend((1..=n_actions).map(|j| format!("p_{j}")));
    for name in ["lambda", "chi", "b"] {
        c.extend((1..=kq).map(|k| format!("{name}_{k}")));
    }
    c.push("chi_loss".into());
    c.push("f_hat".into());
    c.extend((1..=kq).map(|k| format!("g_hat_{k}")));
    c.extend((1..=kq).map(|k| format!("lower_bound_{k}")));
    c.push("kl_to_ref".into());
    c
}

/// Dataset header for `k` objectives.
pub fn dataset_columns(k: usize) -> Vec<String> {
    let mut c: Vec<String> = ["x", "y", "y_prime", "n_actions"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    c.extend((1..=k).map(|j| format!("i_{j}")));
    c
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    /// Printed with 9 significant digits.
    Float(f64),
    /// Printed in shortest round-trip form.
    Exact(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_sig9(*v),
            Cell::Exact(v) => {
                if *v == 0.0 {
                    "0".into()
                } else {
                    format!("{v}")
                }
            }
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// `%.9g` with trailing zeros removed.
pub fn fmt_sig9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders rows under `columns`; every row must have the header's arity.
pub fn csv_string<C: AsRef<str>>(columns: &[C], rows: &[Vec<Cell>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| MopoError::SchemaError(e.to_string());
    w.write_record(columns.iter().map(|c| c.as_ref()))
        .map_err(csv_err)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(MopoError::SchemaError(format!(
                "row {i} has {} fields, header has {}",
                row.len(),
                columns.len()
            )));
        }
        w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MopoError::SchemaError(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_csv<C: AsRef<str>>(path: &Path, columns: &[C], rows: &[Vec<Cell>]) -> Result<()> {
    let text = csv_string(columns, rows)?;
    std::fs::write(path, text).map_err(|e| MopoError::io(path, e))
}

/// Reads a CSV file into its header and string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| MopoError::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let schema = |e: csv::Error| MopoError::SchemaError(e.to_string());
    let header = r
        .headers()
        .map_err(schema)?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(schema)?;
    Ok((header, rows))
}

/// History rows, one per `every`-th step plus the final step.
pub fn history_rows(history: &[Snapshot], seed: u64, every: usize) -> Vec<Vec<Cell>> {
    let every = every.max(1);
    let last = history.len().saturating_sub(1);
    history
        .iter()
        .enumerate()
        .filter(|(i, s)| s.step % every == 0 || *i == last)
        .map(|(_, s)| {
            let mut row = vec![Cell::Int(s.step as i64), Cell::Int(seed as i64)];
            row.extend(s.probs.iter().map(|&v| Cell::Float(v)));
            for v in [&s.lambda, &s.chi, &s.b] {
                row.extend(v.iter().map(|&x| Cell::Float(x)));
            }
            row.push(Cell::Float(s.chi_loss));
            row.push(Cell::Float(s.f_hat));
            row.extend(s.g_hat.iter().map(|&x| Cell::Float(x)));
            row.extend(s.lower_bound.iter().map(|&x| Cell::Float(x)));
            row.push(Cell::Float(s.kl_to_ref));
            row
        })
        .collect()
}

fn dataset_rows(d: &PreferenceDataset) -> Vec<Vec<Cell>> {
    d.records
        .iter()
        .map(|r| {
            let mut row = match d.mode {
                Mode::Bandit { n_actions } => vec![
                    Cell::Empty,
                    Cell::Exact(r.y),
                    Cell::Exact(r.y_prime),
                    Cell::Int(n_actions as i64),
                ],
                Mode::Contextual => vec![
                    Cell::Exact(r.context.unwrap_or(0.0)),
                    Cell::Exact(r.y),
                    Cell::Exact(r.y_prime),
                    Cell::Empty,
                ],
            };
            row.extend(r.indicators.iter().map(|&b| Cell::Int(b as i64)));
            row
        })
        .collect()
}

pub fn dataset_csv(d: &PreferenceDataset) -> Result<String> {
    csv_string(&dataset_columns(d.k_objectives), &dataset_rows(d))
}

pub fn write_dataset(path: &Path, d: &PreferenceDataset) -> Result<()> {
    emit_csv(path, &dataset_columns(d.k_objectives), &dataset_rows(d))
}

pub fn read_dataset(path: &Path) -> Result<PreferenceDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| MopoError::io(path, e))?;
    parse_dataset(&text)
}

/// Inverse of [`dataset_csv`]. A header-only file yields an empty
/// contextual dataset.
pub fn parse_dataset(text: &str) -> Result<PreferenceDataset> {
    let (header, rows) = parse_csv(text)?;
    let fixed = ["x", "y", "y_prime", "n_actions"];
    if header.len() < fixed.len() + 1 || header[..4] != fixed {
        return Err(MopoError::SchemaError(format!(
            "dataset header must start with x,y,y_prime,n_actions and list indicators, got {header:?}"
        )));
    }
    let k = header.len() - 4;
    if header[4..] != dataset_columns(k)[4..] {
        return Err(MopoError::SchemaError("indicator columns must be i_1..i_K".into()));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| MopoError::SchemaError(format!("bad {what} value {s:?}")))
    };
    let mut mode = Mode::Contextual;
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(MopoError::SchemaError(format!("row {i} has wrong arity")));
        }
        let indicators = row[4..]
            .iter()
            .map(|v| match v.as_str() {
                "1" => Ok(true),
                "0" => Ok(false),
                _ => Err(MopoError::SchemaError(format!("bad indicator {v:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let (y, yp) = (num(&row[1], "y")?, num(&row[2], "y_prime")?);
        let row_mode = if row[3].is_empty() {
            Mode::Contextual
        } else {
            let n = row[3]
                .parse::<usize>()
                .map_err(|_| MopoError::SchemaError(format!("bad n_actions {:?}", row[3])))?;
            Mode::Bandit { n_actions: n }
        };
        if i > 0 && row_mode != mode {
            return Err(MopoError::SchemaError("mixed bandit and contextual rows".into()));
        }
        mode = row_mode;
        records.push(PreferenceRecord {
            context: match row_mode {
                Mode::Contextual => Some(num(&row[0], "x")?),
                Mode::Bandit { .. } => None,
            },
            y,
            y_prime: yp,
            indicators,
        });
    }
    PreferenceDataset::new(records, k, mode)
}

pub fn write_policy(path: &Path, policy: &crate::domain::Policy) -> Result<()> {
    let cols = policy.shape().cols();
    let probs = policy.probabilities();
    let rows: Vec<Vec<Cell>> = policy
        .logits()
        .iter()
        .zip(&probs)
        .enumerate()
        .map(|(i, (l, p))| {
            vec![
                Cell::Int((i / cols) as i64),
                Cell::Int((i % cols) as i64),
                Cell::Exact(*l),
                Cell::Float(*p),
            ]
        })
        .collect();
    emit_csv(path, POLICY_COLUMNS, &rows)
}

/// Inverse of [`write_policy`]. A single-row table reads back as tabular.
pub fn read_policy(path: &Path) -> Result<crate::domain::Policy> {
    use crate::domain::{Policy, PolicyShape};
    let (header, rows) = read_csv(path)?;
    if header != POLICY_COLUMNS {
        return Err(MopoError::SchemaError(format!("policy header {header:?}")));
    }
    if rows.is_empty() {
        return Err(MopoError::EmptyInput("policy table".into()));
    }
    let bad = |s: &str| MopoError::SchemaError(format!("bad policy value {s:?}"));
    let mut cells = Vec::with_capacity(rows.len());
    for r in &rows {
        let i: usize = r[0].parse().map_err(|_| bad(&r[0]))?;
        let j: usize = r[1].parse().map_err(|_| bad(&r[1]))?;
        let l: f64 = r[2].parse().map_err(|_| bad(&r[2]))?;
        cells.push((i, j, l));
    }
    let bx = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let by = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    if cells.len() != bx * by {
        return Err(MopoError::SchemaError("policy table is not rectangular".into()));
    }
    let mut logits = vec![f64::NAN; bx * by];
    for (i, j, l) in cells {
        logits[i * by + j] = l;
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(MopoError::SchemaError("policy table has duplicate cells".into()));
    }
    let shape = if bx == 1 {
        PolicyShape::Bandit { n: by }
    } else {
        PolicyShape::Grid { bx, by }
    };
    Policy::from_logits(shape, logits)
}
