//! Post-hoc verification of a trace file.
//!
//! Reads the embedded config, then per method: reports the normalized
//! boundary corrections, re-verifies the telescoping level identity from the
//! trace columns for the single-recursion adaptive methods, and recomputes
//! the feasibility value rho from the per-expert miss columns when present.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use olcp_core::feasibility::feasibility_diagnostic;

use crate::output::fmt_sig;

/// Residual tolerance for the level identity check.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

pub struct TraceFile {
    pub config: HashMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TraceFile {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("trace is missing the `{name}` column"))
    }

    pub fn config_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .config
            .get(key)
            .with_context(|| format!("trace header does not record `{key}`"))?;
        raw.parse()
            .with_context(|| format!("unreadable `{key}` in trace header: `{raw}`"))
    }
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut config = HashMap::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(body) = comment.trim().strip_prefix("config:") {
                for token in body.split_whitespace() {
                    if let Some((key, value)) = token.split_once('=') {
                        config.insert(key.to_string(), value.to_string());
                    }
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.to_string()).collect();
        match &columns {
            None => columns = Some(cells),
            Some(cols) => {
                if cells.len() != cols.len() {
                    bail!(
                        "trace row {} has {} fields, header has {}",
                        rows.len() + 1,
                        cells.len(),
                        cols.len()
                    );
                }
                rows.push(cells);
            }
        }
    }
    let columns = columns.context("trace has no column header")?;
    Ok(TraceFile {
        config,
        columns,
        rows,
    })
}

fn parse_cell(cell: &str, column: &str, row: usize) -> Result<f64> {
    cell.parse()
        .with_context(|| format!("row {row}: unreadable {column} value `{cell}`"))
}

struct MethodRows<'a> {
    name: String,
    rows: Vec<&'a Vec<String>>,
}

fn group_by_method<'a>(trace: &'a TraceFile, method_col: usize) -> Vec<MethodRows<'a>> {
    let mut groups: Vec<MethodRows<'a>> = Vec::new();
    for row in &trace.rows {
        let name = &row[method_col];
        match groups.iter_mut().find(|g| &g.name == name) {
            Some(group) => group.rows.push(row),
            None => groups.push(MethodRows {
                name: name.clone(),
                rows: vec![row],
            }),
        }
    }
    groups
}

/// Runs every applicable check; returns the printable report and whether all
/// checks passed.
pub fn diagnose(path: &Path) -> Result<(String, bool)> {
    let trace = read_trace(path)?;
    let method_col = trace.column("method")?;
    let covered_col = trace.column("covered")?;
    let level_col = trace.column("alpha_t")?;
    let lower_col = trace.column("L_t")?;
    let upper_col = trace.column("U_t")?;
    let err_cols: Vec<usize> = (0..trace.columns.len())
        .filter(|&i| trace.columns[i].starts_with("err_"))
        .collect();
    let alpha = trace.config_f64("alpha")?;
    let gamma = trace.config_f64("gamma")?;

    let mut out = String::new();
    let mut all_pass = true;
    out.push_str(&format!("trace: {}\n", path.display()));
    let groups = group_by_method(&trace, method_col);
    if groups.is_empty() {
        out.push_str("no issued intervals; nothing to check\n");
        return Ok((out, true));
    }

    for group in &groups {
        let n = group.rows.len();
        out.push_str(&format!("method {}: {} issued intervals\n", group.name, n));

        let has_corrections = group.rows.iter().any(|r| !r[lower_col].is_empty());
        if has_corrections {
            let mut sum_lower = 0.0;
            let mut sum_upper = 0.0;
            for (i, row) in group.rows.iter().enumerate() {
                sum_lower += parse_cell(&row[lower_col], "L_t", i + 1)?;
                sum_upper += parse_cell(&row[upper_col], "U_t", i + 1)?;
            }
            let scale = n as f64 * gamma;
            out.push_str(&format!(
                "  normalized corrections: lower {}, upper {}\n",
                fmt_sig(sum_lower / scale, 6),
                fmt_sig(sum_upper / scale, 6)
            ));

            // the telescoping identity only holds for a single level
            // recursion; the aggregated method switches experts per step
            if group.name == "aci" || group.name == "olcp" {
                let mut sum_err = 0.0;
                let mut sum_corr = 0.0;
                let mut max_residual = 0.0f64;
                let alpha_first = parse_cell(&group.rows[0][level_col], "alpha_t", 1)?;
                for (i, row) in group.rows.iter().enumerate() {
                    let covered = parse_cell(&row[covered_col], "covered", i + 1)?;
                    let err = 1.0 - covered;
                    let level = parse_cell(&row[level_col], "alpha_t", i + 1)?;
                    let l = parse_cell(&row[lower_col], "L_t", i + 1)?;
                    let u = parse_cell(&row[upper_col], "U_t", i + 1)?;
                    sum_err += err - alpha;
                    sum_corr += l - u;
                    let level_next = if i + 1 < n {
                        parse_cell(&group.rows[i + 1][level_col], "alpha_t", i + 2)?
                    } else {
                        level + gamma * (alpha - err) + l - u
                    };
                    let residual =
                        sum_err - (alpha_first - level_next) / gamma - sum_corr / gamma;
                    max_residual = max_residual.max(residual.abs());
                }
                let pass = max_residual <= IDENTITY_TOLERANCE;
                all_pass &= pass;
                out.push_str(&format!(
                    "  level identity: {} (max residual {}, tolerance {})\n",
                    if pass { "PASS" } else { "FAIL" },
                    fmt_sig(max_residual, 6),
                    fmt_sig(IDENTITY_TOLERANCE, 6)
                ));
            }
        }

        if !err_cols.is_empty() && group.rows.iter().any(|r| !r[err_cols[0]].is_empty()) {
            let mut errs = Vec::with_capacity(n);
            for (i, row) in group.rows.iter().enumerate() {
                let mut step = Vec::with_capacity(err_cols.len());
                for &c in &err_cols {
                    step.push(parse_cell(&row[c], &trace.columns[c], i + 1)? != 0.0);
                }
                errs.push(step);
            }
            let report = feasibility_diagnostic(&errs, alpha);
            let witness: Vec<String> =
                report.witness.iter().map(|w| fmt_sig(*w, 6)).collect();
            out.push_str(&format!(
                "  feasibility rho: {} (witness mixture [{}])\n",
                fmt_sig(report.rho, 6),
                witness.join(", ")
            ));
        }
    }
    out.push_str(if all_pass {
        "diagnose: PASS\n"
    } else {
        "diagnose: FAIL\n"
    });
    Ok((out, all_pass))
}
