//! CSV ingestion for externally produced prediction streams.
//!
//! A stream file is a headered CSV with one row per time step carrying the
//! time index `t`, the realized outcome `y`, the point prediction `y_hat`,
//! and optional covariate columns `x1`, `x2`, ... used for localization.
//! Rows must arrive in strictly increasing time order; errors cite the
//! 1-based data row so they can be chased in the file directly.

use std::io::Read;

use crate::error::{OlcpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub t: u64,
    pub covariates: Vec<f64>,
    pub prediction: f64,
    pub outcome: f64,
}

/// Column layout resolved from the header row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    t: usize,
    outcome: usize,
    prediction: usize,
    /// Covariate column positions in x1, x2, ... order.
    covariates: Vec<usize>,
}

impl ColumnSpec {
    pub fn from_header(header: &[String]) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| OlcpError::MissingColumn(name.to_string()))
        };
        let mut covariates: Vec<(u32, usize)> = Vec::new();
        for (idx, name) in header.iter().enumerate() {
            let name = name.trim();
            if let Some(rest) = name.strip_prefix('x') {
                if let Ok(order) = rest.parse::<u32>() {
                    covariates.push((order, idx));
                }
            }
        }
        covariates.sort();
        Ok(Self {
            t: find("t")?,
            outcome: find("y")?,
            prediction: find("y_hat")?,
            covariates: covariates.into_iter().map(|(_, idx)| idx).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.covariates.len()
    }
}

fn parse_field<T: std::str::FromStr>(
    fields: &csv::StringRecord,
    idx: usize,
    column: &str,
    row: usize,
) -> Result<T> {
    let raw = fields.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| OlcpError::UnparsableValue {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Reads a full stream. Returns the resolved columns and the records.
pub fn ingest_stream(reader: impl Read) -> Result<(ColumnSpec, Vec<StreamRecord>)> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv_reader
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let layout = ColumnSpec::from_header(&header)?;

    let mut records = Vec::new();
    let mut prev_t: Option<u64> = None;
    for (i, row) in csv_reader.records().enumerate() {
        let row_num = i + 1;
        let fields = row?;
        let t: u64 = parse_field(&fields, layout.t, "t", row_num)?;
        if let Some(prev) = prev_t {
            if t <= prev {
                return Err(OlcpError::NonMonotoneTime {
                    row: row_num,
                    previous: prev,
                    current: t,
                });
            }
        }
        prev_t = Some(t);
        let outcome: f64 = parse_field(&fields, layout.outcome, "y", row_num)?;
        let prediction: f64 = parse_field(&fields, layout.prediction, "y_hat", row_num)?;
        let mut covariates = Vec::with_capacity(layout.dim());
        for (k, &idx) in layout.covariates.iter().enumerate() {
            let column = format!("x{}", k + 1);
            covariates.push(parse_field(&fields, idx, &column, row_num)?);
        }
        records.push(StreamRecord {
            t,
            covariates,
            prediction,
            outcome,
        });
    }
    Ok((layout, records))
}
