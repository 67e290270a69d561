//! CSV file formats. Floats are written in shortest round-trip form, so
//! every reader returns exactly what the writer was given.

use std::fs::File;
use std::path::Path;

use ttalab_core::bench::RunResult;
use ttalab_core::netcore::Matrix;
use ttalab_core::prototypes::PrototypeBank;
use ttalab_core::streams::{Dataset, ManifestRow};

use crate::error::{HarnessError, Result};

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

pub(crate) fn write_row<I, S>(w: &mut csv::Writer<File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| HarnessError::csv(path, e))
}

pub(crate) fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| HarnessError::Format { path: path.into(), line, message: format!("missing column {i}") })?;
    raw.parse().map_err(|_| HarnessError::Format { path: path.into(), line, message: format!("cannot parse `{raw}` in column {i}") })
}

pub(crate) fn records(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<csv::StringRecord>> {
    r.records().collect::<std::result::Result<_, _>>().map_err(|e| HarnessError::csv(path, e))
}

pub(crate) fn check_header(path: &Path, r: &mut csv::Reader<File>, expected: &[&str]) -> Result<csv::StringRecord> {
    let header = r.headers().map_err(|e| HarnessError::csv(path, e))?.clone();
    for (i, name) in expected.iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(HarnessError::Format { path: path.into(), line: 1, message: format!("expected column `{name}` at position {i}") });
        }
    }
    Ok(header)
}

/// Writes `y,f0,...,f{d−1}`.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = writer(path)?;
    let header = std::iter::once("y".to_string()).chain((0..data.dim()).map(|j| format!("f{j}")));
    write_row(&mut w, path, header)?;
    for i in 0..data.len() {
        let row = std::iter::once(data.y[i].to_string()).chain(data.x.row(i).iter().map(f64::to_string));
        write_row(&mut w, path, row)?;
    }
    finish(w, path)
}

/// Reads `y,f0,...`; the class count is `classes` or one past the largest label.
pub fn read_dataset(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let mut r = reader(path)?;
    let header = check_header(path, &mut r, &["y"])?;
    let dim = header.len() - 1;
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(HarnessError::Format { path: path.into(), line: 1, message: format!("expected column `f{j}`, found `{name}`") });
        }
    }
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for rec in records(path, &mut r)? {
        ys.push(field::<usize>(&rec, 0, path)?);
        for j in 0..dim {
            xs.push(field::<f64>(&rec, j + 1, path)?);
        }
    }
    let classes = classes.unwrap_or_else(|| ys.iter().max().map_or(0, |m| m + 1));
    let x = Matrix::from_vec(ys.len(), dim, xs)?;
    Ok(Dataset::new(x, ys, classes)?)
}

/// Writes `class,count,f0,...`.
pub fn write_prototypes(path: &Path, bank: &PrototypeBank) -> Result<()> {
    let mut w = writer(path)?;
    let header = ["class".to_string(), "count".to_string()].into_iter().chain((0..bank.dim()).map(|j| format!("f{j}")));
    write_row(&mut w, path, header)?;
    for c in 0..bank.class_count() {
        let row = [c.to_string(), bank.counts()[c].to_string()]
            .into_iter()
            .chain(bank.prototype(c).iter().map(f64::to_string));
        write_row(&mut w, path, row)?;
    }
    finish(w, path)
}

pub fn read_prototypes(path: &Path) -> Result<PrototypeBank> {
    let mut r = reader(path)?;
    let header = check_header(path, &mut r, &["class", "count"])?;
    let dim = header.len() - 2;
    let mut counts = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in records(path, &mut r)?.into_iter().enumerate() {
        let class: usize = field(&rec, 0, path)?;
        if class != i {
            return Err(HarnessError::Format { path: path.into(), line: i as u64 + 2, message: format!("classes must be listed in order, found {class}") });
        }
        counts.push(field(&rec, 1, path)?);
        for j in 0..dim {
            values.push(field::<f64>(&rec, j + 2, path)?);
        }
    }
    Ok(PrototypeBank::from_parts(Matrix::from_vec(counts.len(), dim, values)?, counts)?)
}

/// Writes `segment,kind,severity,batches`.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, ["segment", "kind", "severity", "batches"])?;
    for r in rows {
        write_row(&mut w, path, [r.segment.to_string(), r.kind.to_string(), r.severity.to_string(), r.batches.to_string()])?;
    }
    finish(w, path)
}

/// Manifest row with an owned kind name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub segment: usize,
    pub kind: String,
    pub severity: u8,
    pub batches: usize,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = reader(path)?;
    check_header(path, &mut r, &["segment", "kind", "severity", "batches"])?;
    records(path, &mut r)?
        .iter()
        .map(|rec| {
            Ok(ManifestEntry {
                segment: field(rec, 0, path)?,
                kind: field(rec, 1, path)?,
                severity: field(rec, 2, path)?,
                batches: field(rec, 3, path)?,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per test batch with its error and the adapter's step log.
pub fn write_batches(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        [
            "batch", "segment", "index", "kind", "severity", "size", "wrong", "error_pct", "sgd_steps", "ema_updates",
            "loss_total", "loss_self_training", "loss_contrastive", "loss_source_ce", "loss_entropy", "ema_distance",
        ],
    )?;
    for (i, b) in result.batches.iter().enumerate() {
        let log = b.log.clone().unwrap_or_default();
        write_row(
            &mut w,
            path,
            [
                i.to_string(),
                b.segment.to_string(),
                b.index_in_segment.to_string(),
                b.kind.to_string(),
                b.severity.to_string(),
                b.size.to_string(),
                b.wrong.to_string(),
                b.error_pct().to_string(),
                log.sgd_steps.to_string(),
                log.ema_updates.to_string(),
                opt(log.total),
                opt(log.self_training),
                opt(log.contrastive),
                opt(log.source_ce),
                opt(log.entropy),
                opt(log.ema_distance),
            ],
        )?;
    }
    finish(w, path)
}
