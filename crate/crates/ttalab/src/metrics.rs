use std::path::Path;

use sha2::{Digest, Sha256};
use ttalab_core::bench::RunResult;

use crate::error::{HarnessError, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMetric {
    pub segment: usize,
    pub kind: String,
    pub severity: u8,
    pub batches: usize,
    pub error_pct: f64,
}

impl SegmentMetric {
    /// Column label for tables: the kind, with `@severity` unless it is 5.
    pub fn label(&self) -> String {
        if self.severity == 5 || self.severity == 0 {
            self.kind.clone()
        } else {
            format!("{}@{}", self.kind, self.severity)
        }
    }
}

/// Per-segment online error of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// Row name in tables, usually the method.
    pub label: String,
    pub segments: Vec<SegmentMetric>,
    /// Arithmetic mean of the segment errors.
    pub mean_error: f64,
    /// Relative path of the per-batch log.
    pub batches_file: String,
    /// Seconds spent in the run; not written to `metrics.csv`.
    pub wall_clock_s: f64,
    pub config_hash: String,
}

/// SHA-256 of the resolved configuration text, hex encoded.
pub fn config_hash(resolved: &str) -> String {
    Sha256::digest(resolved.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl MetricsRecord {
    pub fn from_run(label: &str, result: &RunResult, wall_clock_s: f64, config_hash: String) -> Self {
        let segments: Vec<SegmentMetric> = result
            .segments
            .iter()
            .map(|s| SegmentMetric {
                segment: s.segment,
                kind: s.kind.to_string(),
                severity: s.severity,
                batches: s.batches,
                error_pct: s.error_pct,
            })
            .collect();
        let mean_error = mean(segments.iter().map(|s| s.error_pct));
        Self { label: label.to_string(), segments, mean_error, batches_file: "batches.csv".into(), wall_clock_s, config_hash }
    }

    /// Writes one row per segment followed by a `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = io::writer(path)?;
        io::write_row(&mut w, path, ["label", "segment", "kind", "severity", "batches", "error_pct", "batches_file", "config_hash"])?;
        for s in &self.segments {
            io::write_row(
                &mut w,
                path,
                [
                    self.label.clone(),
                    s.segment.to_string(),
                    s.kind.clone(),
                    s.severity.to_string(),
                    s.batches.to_string(),
                    s.error_pct.to_string(),
                    self.batches_file.clone(),
                    self.config_hash.clone(),
                ],
            )?;
        }
        let total: usize = self.segments.iter().map(|s| s.batches).sum();
        io::write_row(
            &mut w,
            path,
            [
                self.label.clone(),
                "mean".into(),
                String::new(),
                String::new(),
                total.to_string(),
                self.mean_error.to_string(),
                self.batches_file.clone(),
                self.config_hash.clone(),
            ],
        )?;
        io::finish(w, path)
    }

    /// Reads a file written by [`MetricsRecord::write_csv`]; wall-clock is 0.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = io::reader(path)?;
        io::check_header(path, &mut r, &["label", "segment", "kind", "severity", "batches", "error_pct", "batches_file", "config_hash"])?;
        let rows = io::records(path, &mut r)?;
        let (last, body) = rows
            .split_last()
            .ok_or_else(|| HarnessError::Format { path: path.into(), line: 1, message: "no rows".into() })?;
        if last.get(1) != Some("mean") {
            return Err(HarnessError::Format { path: path.into(), line: rows.len() as u64 + 1, message: "last row must be the mean".into() });
        }
        let segments = body
            .iter()
            .map(|rec| {
                Ok(SegmentMetric {
                    segment: io::field(rec, 1, path)?,
                    kind: io::field(rec, 2, path)?,
                    severity: io::field(rec, 3, path)?,
                    batches: io::field(rec, 4, path)?,
                    error_pct: io::field(rec, 5, path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: io::field(last, 0, path)?,
            segments,
            mean_error: io::field(last, 5, path)?,
            batches_file: io::field(last, 6, path)?,
            wall_clock_s: 0.0,
            config_hash: io::field(last, 7, path)?,
        })
    }
}
