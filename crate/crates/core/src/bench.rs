//! Source pre-training and the online evaluation loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::adapters::{Adapter, AdapterConfig, Method, ReplayBuffer, StepLog, WindowAdapter};
use crate::error::{config_err, Error, Result};
use crate::losses;
use crate::netcore::{sgd_step, softmax_backward, Activation, BnMode, Network, NetworkConfig, OutputGrads};
use crate::prototypes::PrototypeBank;
use crate::rng::rng_from;
use crate::streams::{
    build_continual, build_gradual, order_by_source_error, CorruptionKind, Dataset, Direction, OrderMode,
    SourceDomain, SourceSpec, Stream, StreamSpec, TestSource,
};

/// Encoder widths of the benchmark network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![64], feature_dim: 32, activation: Activation::Relu, batch_norm: true }
    }
}

impl ModelSpec {
    pub fn network_config(&self, input_dim: usize, classes: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
            classes,
            activation: self.activation,
            batch_norm: self.batch_norm,
            proj_dim: None,
        }
    }
}

/// Supervised source training budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 10, lr: 0.05, momentum: 0.9, batch_size: 64 }
    }
}

/// Adapter settings used by the synthetic benchmark. The small network and
/// short streams need a larger step size, a faster teacher and stronger
/// augmentation than the library defaults.
pub fn benchmark_adapter(method: Method) -> AdapterConfig {
    AdapterConfig { lr: 0.4, alpha: 0.99, augment_strength: 0.6, ..AdapterConfig::for_method(method) }
}

/// Mini-batch SGD on cross-entropy with batch norm in train mode.
pub fn pretrain(data: &Dataset, model: &ModelSpec, cfg: &PretrainConfig, seed: u64) -> Result<Network> {
    if data.is_empty() {
        return Err(config_err!("pre-training needs source samples"));
    }
    if cfg.batch_size < 2 {
        return Err(config_err!("pre-training batch size must be at least 2"));
    }
    let mut rng = rng_from(seed, &[0x0b7e]);
    let mut net = Network::new(&model.network_config(data.dim(), data.classes), &mut rng)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let x = data.x.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.y[i]).collect();
            let pass = net.forward(&x, BnMode::Train)?;
            let p = pass.probs();
            let ce = losses::source_ce(&p, &y)?;
            let dz = softmax_backward(&p, ce.grad.as_ref().unwrap())?;
            net.backward(&pass, OutputGrads { logits: Some(&dz), ..Default::default() })?;
            sgd_step(&mut net, cfg.lr, cfg.momentum)?;
        }
    }
    for p in net.params_mut() {
        p.velocity.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(net)
}

/// Percentage of wrong predictions.
pub fn error_pct(predictions: &[usize], labels: &[usize]) -> f64 {
    let wrong = predictions.iter().zip(labels).filter(|(p, y)| p != y).count();
    100.0 * wrong as f64 / labels.len().max(1) as f64
}

/// Everything that depends only on the seed: source data, the pre-trained
/// model, its prototypes, a clean held-out probe set and the test distribution.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub test_source: TestSource,
    pub train: Dataset,
    pub probe: Dataset,
    pub model: Network,
    pub bank: PrototypeBank,
    /// Error (%) of the source model on the clean probe set.
    pub source_error: f64,
}

/// Synthetic source: training split, probe set and test stream all come from
/// the same seeded domain.
pub fn prepare(
    source: &SourceSpec,
    model: &ModelSpec,
    pretrain_cfg: &PretrainConfig,
    probe_size: usize,
    seed: u64,
) -> Result<Prepared> {
    let domain = SourceDomain::new(source, seed)?;
    let train = crate::streams::generate_source(source, seed)?;
    let mut probe_rng = rng_from(seed, &[0x9b0e]);
    let labels = domain.draw_labels(probe_size, &mut probe_rng);
    let probe = Dataset::new(domain.draw_batch(&labels, &mut probe_rng), labels, source.classes)?;
    prepare_from_data(train, probe, TestSource::Domain(domain), model, pretrain_cfg, seed)
}

/// Pre-trains on `train` and extracts prototypes before any adaptation.
pub fn prepare_from_data(
    train: Dataset,
    probe: Dataset,
    test_source: TestSource,
    model: &ModelSpec,
    pretrain_cfg: &PretrainConfig,
    seed: u64,
) -> Result<Prepared> {
    let mut net = pretrain(&train, model, pretrain_cfg, seed)?;
    let bank = PrototypeBank::extract(&mut net, &train.x, &train.y)?;
    let source_error = if probe.is_empty() {
        0.0
    } else {
        error_pct(&net.infer(&probe.x, BnMode::Eval)?.logits.argmax_rows(), &probe.y)
    };
    Ok(Prepared { seed, test_source, train, probe, model: net, bank, source_error })
}

impl Prepared {
    /// Builds the stream for `mode`; difficulty orders use the source model's
    /// severity-5 error on the probe set.
    pub fn stream(&self, kinds: &[CorruptionKind], mode: OrderMode, batches: usize, batch_size: usize) -> Result<StreamSpec> {
        let spec = match mode {
            OrderMode::Continual | OrderMode::Custom => build_continual(kinds, batches),
            OrderMode::Gradual => build_gradual(kinds, batches),
            OrderMode::EasyToHard | OrderMode::HardToEasy => {
                let dir = if mode == OrderMode::EasyToHard { Direction::EasyToHard } else { Direction::HardToEasy };
                let mut model = self.model.clone();
                order_by_source_error(kinds, &mut model, &self.probe, batches, dir, self.seed)?
            }
        };
        Ok(spec.with_batch_size(batch_size).with_seed(self.seed))
    }

    /// Adapter initialized from the pre-trained model, warmed up when configured.
    pub fn adapter(&self, cfg: &AdapterConfig, batch_size: usize) -> Result<Adapter> {
        let replay = if cfg.method == Method::Rmt && !cfg.source_free() {
            Some(ReplayBuffer::new(&self.train, cfg.replay_fraction, rng_from(cfg.seed, &[0x4e91]))?)
        } else {
            None
        };
        let bank = (cfg.method == Method::Rmt).then(|| self.bank.clone());
        let mut adapter = Adapter::new(cfg.clone(), self.model.clone(), bank, replay)?;
        if cfg.warmup && cfg.method.uses_teacher() {
            adapter.warmup(&self.train.x, batch_size)?;
        }
        Ok(adapter)
    }

    /// Runs `cfg` online over `stream`.
    pub fn run(&self, cfg: &AdapterConfig, stream: &StreamSpec) -> Result<RunResult> {
        let adapter = self.adapter(cfg, stream.batch_size)?;
        evaluate(adapter, stream, &self.test_source)
    }
}

/// Outcome of one test batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub segment: usize,
    pub index_in_segment: usize,
    pub kind: &'static str,
    pub severity: u8,
    pub size: usize,
    pub wrong: usize,
    pub predictions: Vec<usize>,
    /// Log of the last update in this batch, if any.
    pub log: Option<StepLog>,
}

impl BatchRecord {
    pub fn error_pct(&self) -> f64 {
        100.0 * self.wrong as f64 / self.size as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub segment: usize,
    pub kind: &'static str,
    pub severity: u8,
    pub batches: usize,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub batches: Vec<BatchRecord>,
    pub segments: Vec<SegmentResult>,
}

impl RunResult {
    /// Arithmetic mean of the segment errors.
    pub fn mean_error(&self) -> f64 {
        mean(self.segments.iter().map(|s| s.error_pct))
    }

    /// Mean error over segments at the given severity.
    pub fn mean_error_at(&self, severity: u8) -> f64 {
        mean(self.segments.iter().filter(|s| s.severity == severity).map(|s| s.error_pct))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Online evaluation: each batch is predicted (and adapted on) before the next
/// one is drawn. The model is never reset between segments.
pub fn evaluate(adapter: Adapter, stream: &StreamSpec, source: &TestSource) -> Result<RunResult> {
    let window = adapter.config().window;
    let mut runner = match window {
        Some(b) => Runner::Window(WindowAdapter::new(adapter, b, stream.batch_size)?),
        None => Runner::Batch(adapter),
    };
    let mut batches = Vec::with_capacity(stream.total_batches());
    for batch in Stream::new(stream, source)? {
        let (predictions, log) = match &mut runner {
            Runner::Batch(a) => {
                let out = a.step(&batch.x)?;
                (out.predictions, Some(out.log))
            }
            Runner::Window(w) => {
                let mut preds = Vec::with_capacity(batch.x.rows());
                let mut last = None;
                for row in batch.x.iter_rows() {
                    let out = w.push(row)?;
                    preds.push(out.prediction);
                    last = out.log.or(last);
                }
                (preds, last)
            }
        };
        let wrong = predictions.iter().zip(&batch.y).filter(|(p, y)| p != y).count();
        batches.push(BatchRecord {
            segment: batch.segment,
            index_in_segment: batch.index_in_segment,
            kind: batch.shift.kind_name(),
            severity: batch.shift.severity(),
            size: batch.y.len(),
            wrong,
            predictions,
            log,
        });
    }
    let segments = stream
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let (wrong, total) = batches
                .iter()
                .filter(|b| b.segment == i)
                .fold((0, 0), |(w, t), b| (w + b.wrong, t + b.size));
            SegmentResult {
                segment: i,
                kind: seg.shift.kind_name(),
                severity: seg.shift.severity(),
                batches: seg.batches,
                error_pct: if total == 0 { 0.0 } else { 100.0 * wrong as f64 / total as f64 },
            }
        })
        .collect();
    if batches.iter().any(|b| b.log.as_ref().and_then(|l| l.total).is_some_and(|t| !t.is_finite())) {
        return Err(Error::Numeric("adaptation loss diverged".into()));
    }
    Ok(RunResult { batches, segments })
}

enum Runner {
    Batch(Adapter),
    Window(WindowAdapter),
}
