//! File and table emission: trace CSVs, summary CSVs, aligned text tables.
//!
//! Traces carry two precision regimes on purpose. Geometry columns (lower,
//! upper, size) print with 9 significant digits, which is plenty for
//! plotting. The level-recursion columns (alpha_t, L_t, U_t, queue) print
//! with full round-trip precision because `diagnose` re-verifies a telescoping
//! identity from them at 1e-9, and that check divides by gamma and sums
//! hundreds of terms: 9-digit rounding would drown the tolerance.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use olcp_core::experiments::{rolling_metric, MethodKind};
use olcp_core::methods::StepRecord;

/// Formats with `digits` significant digits, C `%g` style: fixed notation in
/// a moderate exponent range, scientific outside it, trailing zeros trimmed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let rendered = if exp < -4 || exp >= digits as i32 {
        format!("{:.*e}", digits - 1, x)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    };
    trim_trailing_zeros(&rendered)
}

fn trim_trailing_zeros(s: &str) -> String {
    let (mantissa, suffix) = match s.split_once('e') {
        Some((m, e)) => (m, format!("e{e}")),
        None => (s, String::new()),
    };
    let trimmed = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{trimmed}{suffix}")
}

/// Optional cell: `None` renders as an empty CSV field.
pub fn opt(field: Option<String>) -> String {
    field.unwrap_or_default()
}

/// Header block embedded at the top of every output file so a run can be
/// reproduced from the file alone.
pub fn header_lines(config: &str) -> Vec<String> {
    vec![
        format!("# olcp {}", env!("CARGO_PKG_VERSION")),
        format!("# config: {config}"),
    ]
}

/// One method's issued-step history, destined for a trace file.
pub struct TraceBlock<'a> {
    pub method: MethodKind,
    pub records: &'a [StepRecord],
}

fn method_writes_corrections(method: MethodKind) -> bool {
    matches!(
        method,
        MethodKind::Aci | MethodKind::Olcp | MethodKind::OlcpHedge
    )
}

/// Writes a trace file: embedded header lines, one CSV header row, then one
/// row per issued interval, grouped by method. `num_experts` adds the
/// per-expert miss columns used by the feasibility diagnostic; rows from
/// other methods leave them empty.
pub fn write_trace(
    path: &Path,
    headers: &[String],
    blocks: &[TraceBlock<'_>],
    num_experts: Option<usize>,
    roll_window: usize,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for line in headers {
        writeln!(w, "{line}")?;
    }
    let mut columns = vec![
        "t", "method", "lower", "upper", "size", "covered", "alpha_t", "L_t", "U_t", "queue",
        "expert", "roll_cover", "roll_size",
    ]
    .join(",");
    if let Some(k) = num_experts {
        for i in 1..=k {
            columns.push_str(&format!(",err_{i}"));
        }
    }
    writeln!(w, "{columns}")?;

    for block in blocks {
        let covered: Vec<f64> = block
            .records
            .iter()
            .map(|r| r.covered as u8 as f64)
            .collect();
        let sizes: Vec<f64> = block.records.iter().map(|r| r.interval.width()).collect();
        let roll_cover = rolling_metric(&covered, roll_window);
        let roll_size = rolling_metric(&sizes, roll_window);
        let corrections = method_writes_corrections(block.method);
        for (i, rec) in block.records.iter().enumerate() {
            let rolled = i + 1 >= roll_window;
            let mut row = vec![
                rec.t.to_string(),
                block.method.name().to_string(),
                fmt_sig(rec.interval.lower(), 9),
                fmt_sig(rec.interval.upper(), 9),
                fmt_sig(rec.interval.width(), 9),
                (rec.covered as u8).to_string(),
                format!("{}", rec.level),
                opt(corrections.then(|| format!("{}", rec.lower_correction))),
                opt(corrections.then(|| format!("{}", rec.upper_correction))),
                opt(rec.queue.map(|q| format!("{q}"))),
                opt(rec.expert.map(|e| (e + 1).to_string())),
                opt(rolled.then(|| fmt_sig(roll_cover[i + 1 - roll_window], 6))),
                opt(rolled.then(|| fmt_sig(roll_size[i + 1 - roll_window], 6))),
            ];
            if let Some(k) = num_experts {
                match &rec.expert_errs {
                    Some(errs) => {
                        row.extend(errs.iter().map(|&e| (e as u8).to_string()));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), k)),
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// A summary table: column names plus stringly rows, rendered both as CSV
/// and as an aligned text block.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv(&self, path: &Path, headers: &[String]) -> Result<()> {
        let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for line in headers {
            writeln!(w, "{line}")?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let render = |cells: Vec<&str>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        };
        render(self.columns.to_vec(), &mut out);
        for row in &self.rows {
            render(row.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }

    pub fn write_text(&self, path: &Path, headers: &[String]) -> Result<()> {
        let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for line in headers {
            writeln!(w, "{line}")?;
        }
        write!(w, "{}", self.render_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(0.9, 6), "0.9");
        assert_eq!(fmt_sig(3.5632123, 6), "3.56321");
        assert_eq!(fmt_sig(-3.5632123, 6), "-3.56321");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e6");
        assert_eq!(fmt_sig(0.000012345678, 6), "1.23457e-5");
        assert_eq!(fmt_sig(100.0, 6), "100");
        assert_eq!(fmt_sig(f64::INFINITY, 6), "inf");
        assert_eq!(fmt_sig(0.1, 9), "0.1");
    }

    #[test]
    fn table_text_alignment() {
        let table = Table {
            columns: vec!["method", "n"],
            rows: vec![
                vec!["cp".into(), "999".into()],
                vec!["olcp-hedge".into(), "7".into()],
            ],
        };
        let text = table.render_text();
        assert_eq!(text, "method        n\ncp          999\nolcp-hedge    7\n");
    }
}
