use std::path::{Path, PathBuf};
use std::time::Instant;

use ttalab_core::bench::{prepare, prepare_from_data, Prepared, RunResult};
use ttalab_core::streams::{ManifestRow, StreamSpec, TestSource};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::io;
use crate::metrics::{config_hash, MetricsRecord};

/// Results of one run, before anything is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub result: RunResult,
    pub manifest: Vec<ManifestRow>,
    pub source_error: f64,
    pub resolved: String,
}

/// Pre-trains the source model and extracts prototypes. With a dataset CSV the
/// file serves as training set, probe set and test pool.
pub fn prepare_run(cfg: &RunConfig) -> Result<Prepared> {
    match &cfg.dataset_csv {
        None => Ok(prepare(&cfg.dataset, &cfg.model, &cfg.pretrain, cfg.stream.probe_size, cfg.seed)?),
        Some(path) => {
            let data = io::read_dataset(path, None)?;
            if data.is_empty() {
                return Err(HarnessError::Config(format!("{} has no samples", path.display())));
            }
            let pool = TestSource::Pool(data.clone());
            Ok(prepare_from_data(data.clone(), data, pool, &cfg.model, &cfg.pretrain, cfg.seed)?)
        }
    }
}

pub fn stream_for(cfg: &RunConfig, prepared: &Prepared) -> Result<StreamSpec> {
    Ok(prepared.stream(&cfg.stream.kinds, cfg.stream.order, cfg.stream.batches, cfg.stream.batch_size)?)
}

/// Pre-trains, optionally warms up, then adapts online over the stream.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let prepared = prepare_run(cfg)?;
    let stream = stream_for(cfg, &prepared)?;
    let result = prepared.run(&cfg.resolved_adapter(), &stream)?;
    let resolved = cfg.serialize();
    // the output directory does not change results
    let hashed = RunConfig { out: PathBuf::new(), ..cfg.clone() }.serialize();
    let metrics =
        MetricsRecord::from_run(cfg.adapter.method.name(), &result, start.elapsed().as_secs_f64(), config_hash(&hashed));
    Ok(RunOutput { metrics, result, manifest: stream.manifest(), source_error: prepared.source_error, resolved })
}

/// Writes `metrics.csv`, `batches.csv`, `manifest.csv` and `config.resolved` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    out.metrics.write_csv(&dir.join("metrics.csv"))?;
    io::write_batches(&dir.join("batches.csv"), &out.result)?;
    io::write_manifest(&dir.join("manifest.csv"), &out.manifest)?;
    let resolved = dir.join("config.resolved");
    std::fs::write(&resolved, &out.resolved).map_err(|e| HarnessError::io(resolved, e))
}
