//! CSV ingestion: one header row, one column per series, one row per time point.

use crate::error::{CliError, CliResult};
use dvine_vbda::data::SeriesData;
use dvine_vbda::margins::{ContinuousMargin, Margin, OrdinalMargin, SeriesKind};
use std::path::Path;

/// Columns of a data file, checked against the declared series types.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<SeriesData>,
}

impl Table {
    pub fn t_len(&self) -> usize {
        self.columns.first().map_or(0, SeriesData::len)
    }

    /// Row-major copy, `rows[t][l]`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.t_len())
            .map(|t| {
                self.columns
                    .iter()
                    .map(|c| match c {
                        SeriesData::Discrete(v) => v[t] as f64,
                        SeriesData::Continuous(v) => v[t],
                    })
                    .collect()
            })
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>], types: &[SeriesKind]) -> CliResult<Self> {
        let r = types.len();
        if rows.iter().any(|row| row.len() != r) {
            return Err(CliError::input("stored data rows disagree with the series types"));
        }
        let columns = types
            .iter()
            .enumerate()
            .map(|(l, kind)| match kind {
                SeriesKind::Discrete => SeriesData::Discrete(rows.iter().map(|row| row[l] as i64).collect()),
                SeriesKind::Continuous => SeriesData::Continuous(rows.iter().map(|row| row[l]).collect()),
            })
            .collect();
        Ok(Self {
            names: (1..=r).map(|l| format!("y{l}")).collect(),
            columns,
        })
    }
}

fn parse_cell(raw: &str, kind: SeriesKind, line: u64, name: &str) -> CliResult<f64> {
    let cell = raw.trim();
    if cell.is_empty() {
        return Err(CliError::input(format!("line {line}, column '{name}': empty cell")));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| CliError::input(format!("line {line}, column '{name}': '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::input(format!("line {line}, column '{name}': non-finite value '{cell}'")));
    }
    if kind == SeriesKind::Discrete && (v.fract() != 0.0 || v.abs() > 9.0e15) {
        return Err(CliError::input(format!(
            "line {line}, column '{name}': discrete series needs integer values, got '{cell}'"
        )));
    }
    Ok(v)
}

pub fn read_table(path: &Path, types: &[SeriesKind]) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if names.len() != types.len() {
        return Err(CliError::input(format!(
            "{} has {} columns but {} series types were given",
            path.display(),
            names.len(),
            types.len()
        )));
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); types.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(CliError::input(format!(
                "line {line}: expected {} fields, found {}",
                names.len(),
                record.len()
            )));
        }
        for (l, raw) in record.iter().enumerate() {
            values[l].push(parse_cell(raw, types[l], line, &names[l])?);
        }
    }
    if values[0].is_empty() {
        return Err(CliError::input(format!("{} has no data rows", path.display())));
    }
    let columns = values
        .into_iter()
        .zip(types)
        .map(|(v, kind)| match kind {
            SeriesKind::Discrete => SeriesData::Discrete(v.into_iter().map(|x| x as i64).collect()),
            SeriesKind::Continuous => SeriesData::Continuous(v),
        })
        .collect();
    Ok(Table { names, columns })
}

/// Empirical margin per column: observed frequencies for discrete series,
/// the interpolated ECDF for continuous ones.
pub fn empirical_margins(table: &Table) -> CliResult<Vec<Margin>> {
    table
        .columns
        .iter()
        .map(|c| {
            Ok(match c {
                SeriesData::Discrete(y) => Margin::Ordinal(OrdinalMargin::fit_empirical(y)?),
                SeriesData::Continuous(x) => Margin::Continuous(ContinuousMargin::fit_empirical(x)?),
            })
        })
        .collect()
}

/// Margins from a JSON array, one record per series.
pub fn read_margins(path: &Path, types: &[SeriesKind]) -> CliResult<Vec<Margin>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let margins: Vec<Margin> =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if margins.len() != types.len() {
        return Err(CliError::input(format!(
            "{} margins given for {} series",
            margins.len(),
            types.len()
        )));
    }
    for (l, (m, kind)) in margins.iter().zip(types).enumerate() {
        if m.kind() != *kind {
            return Err(CliError::input(format!("margin {} does not match series type {kind:?}", l + 1)));
        }
    }
    Ok(margins)
}

pub fn parse_types(spec: &str) -> CliResult<Vec<SeriesKind>> {
    spec.split(',')
        .map(|s| match s.trim().to_ascii_lowercase().as_str() {
            "discrete" | "d" => Ok(SeriesKind::Discrete),
            "continuous" | "c" => Ok(SeriesKind::Continuous),
            other => Err(CliError::input(format!("unknown series type '{other}'"))),
        })
        .collect()
}
