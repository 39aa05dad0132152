//! CSV and JSON tables for records and summaries.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{ExperimentRecord, GridPoint, SummaryRow};
use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 12] = [
    "experiment",
    "replication",
    "B",
    "m",
    "max_leaves",
    "bootstrap",
    "sigma",
    "delta",
    "eta",
    "rounds",
    "metric",
    "value",
];

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "experiment",
    "B",
    "m",
    "max_leaves",
    "bootstrap",
    "sigma",
    "delta",
    "eta",
    "rounds",
    "metric",
    "mean",
    "half_width",
    "replications",
    "single_replication",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// `Json` for a `.json` extension, `Csv` otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::invalid(format!("unknown format {s:?} (expected csv or json)"))),
        }
    }
}

/// Shortest text that parses back to `v`; integral values print without a
/// fractional part.
pub fn format_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> Result<String> {
    csv_string(
        &RECORD_COLUMNS,
        records.iter().map(|r| {
            let mut row = vec![r.experiment.clone(), r.replication.to_string()];
            row.extend(r.point.cells());
            row.push(r.metric.name().to_string());
            row.push(format_float(r.value));
            row
        }),
    )
}

pub fn summaries_to_csv(rows: &[SummaryRow]) -> Result<String> {
    csv_string(
        &SUMMARY_COLUMNS,
        rows.iter().map(|s| {
            let mut row = vec![s.experiment.clone()];
            row.extend(s.point.cells());
            row.extend([
                s.metric.name().to_string(),
                format_float(s.mean),
                format_float(s.half_width),
                s.replications.to_string(),
                s.single_replication.to_string(),
            ]);
            row
        }),
    )
}

pub fn records_to_json(records: &[ExperimentRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)? + "\n")
}

fn write(path: &Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn emit_records(records: &[ExperimentRecord], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => records_to_csv(records)?,
        OutputFormat::Json => records_to_json(records)?,
    };
    write(path.as_ref(), text)
}

pub fn emit_summaries(rows: &[SummaryRow], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => summaries_to_csv(rows)?,
        OutputFormat::Json => serde_json::to_string_pretty(rows)? + "\n",
    };
    write(path.as_ref(), text)
}

fn parse_cell<T: FromStr>(row: usize, column: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| Error::NonNumeric {
        column: column.to_string(),
        row,
        value: text.to_string(),
    })
}

fn parse_optional<T: FromStr>(row: usize, column: &str, text: &str) -> Result<Option<T>> {
    if text.is_empty() {
        Ok(None)
    } else {
        parse_cell(row, column, text).map(Some)
    }
}

fn parse_point(row: usize, cells: &[&str]) -> Result<GridPoint> {
    let column = |k: usize| RECORD_COLUMNS[2 + k];
    Ok(GridPoint {
        trees: parse_optional(row, column(0), cells[0])?,
        m: parse_optional(row, column(1), cells[1])?,
        max_leaves: match cells[2] {
            "" => None,
            text => Some(text.parse()?),
        },
        bootstrap: parse_optional(row, column(3), cells[3])?,
        sigma: parse_optional(row, column(4), cells[4])?,
        delta: parse_optional(row, column(5), cells[5])?,
        eta: parse_optional(row, column(6), cells[6])?,
        rounds: parse_optional(row, column(7), cells[7])?,
    })
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::invalid(format!(
            "unexpected header {:?}, expected {}",
            header.iter().collect::<Vec<_>>(),
            expected.join(",")
        )));
    }
    Ok(())
}

/// Parse a record table written by [`emit_records`] (CSV, or JSON for a
/// `.json` path).
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    match OutputFormat::from_path(path) {
        OutputFormat::Json => Ok(serde_json::from_str(&text)?),
        OutputFormat::Csv => parse_records_csv(&text),
    }
}

pub fn parse_records_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &RECORD_COLUMNS)?;
    reader
        .records()
        .enumerate()
        .map(|(row, record)| {
            let record = record?;
            let cells: Vec<&str> = record.iter().collect();
            Ok(ExperimentRecord {
                experiment: cells[0].to_string(),
                replication: parse_cell(row, "replication", cells[1])?,
                point: parse_point(row, &cells[2..10])?,
                metric: cells[10].parse()?,
                value: parse_cell(row, "value", cells[11])?,
            })
        })
        .collect()
}

/// Parse a summary table written by [`emit_summaries`].
pub fn read_summaries(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    if OutputFormat::from_path(path) == OutputFormat::Json {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &SUMMARY_COLUMNS)?;
    reader
        .records()
        .enumerate()
        .map(|(row, record)| {
            let record = record?;
            let cells: Vec<&str> = record.iter().collect();
            Ok(SummaryRow {
                experiment: cells[0].to_string(),
                point: parse_point(row, &cells[1..9])?,
                metric: cells[9].parse()?,
                mean: parse_cell(row, "mean", cells[10])?,
                half_width: parse_cell(row, "half_width", cells[11])?,
                replications: parse_cell(row, "replications", cells[12])?,
                single_replication: parse_cell(row, "single_replication", cells[13])?,
            })
        })
        .collect()
}
