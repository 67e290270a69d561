use std::fmt::Write;

use crate::error::{HarnessError, Result};
use crate::metrics::MetricsRecord;

/// Renders one row per record and one column per segment plus `Mean`.
/// Column order is the first record's segment order; all records must share it.
/// Returns the aligned text table and a byte-stable CSV.
pub fn emit_table(records: &[MetricsRecord]) -> Result<(String, String)> {
    let first = records.first().ok_or_else(|| HarnessError::Config("no records to tabulate".into()))?;
    let columns: Vec<String> = first.segments.iter().map(|s| s.label()).collect();
    for r in records {
        let labels: Vec<String> = r.segments.iter().map(|s| s.label()).collect();
        if labels != columns {
            return Err(HarnessError::Config(format!("record `{}` has a different segment layout", r.label)));
        }
    }
    let header: Vec<String> = std::iter::once("method".to_string())
        .chain(columns.iter().cloned())
        .chain(std::iter::once("Mean".to_string()))
        .collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            std::iter::once(r.label.clone())
                .chain(r.segments.iter().map(|s| format!("{:.2}", s.error_pct)))
                .chain(std::iter::once(format!("{:.2}", r.mean_error)))
                .collect()
        })
        .collect();

    let mut csv = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let widths: Vec<usize> =
        (0..header.len()).map(|c| std::iter::once(&header).chain(&rows).map(|r| r[c].len()).max().unwrap()).collect();
    let mut text = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        writeln!(text, "{}", cells.join("  ").trim_end()).unwrap();
    }
    Ok((text, csv))
}
