use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use super::corruption::{CorruptionKind, CorruptionOp};
use super::source::{Dataset, SourceDomain};
use crate::error::{config_err, Error, Result};
use crate::netcore::{BnMode, Matrix, Network};
use crate::rng::{rng_from, StreamRng};

/// Distribution shift applied to every batch of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shift {
    Clean,
    Corrupt(CorruptionOp),
}

impl Shift {
    /// Manifest name; `none` for clean segments.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Shift::Clean => "none",
            Shift::Corrupt(op) => op.kind().name(),
        }
    }

    /// Severity level; 0 for clean segments.
    pub fn severity(&self) -> u8 {
        match self {
            Shift::Clean => 0,
            Shift::Corrupt(op) => op.severity(),
        }
    }

    pub fn apply_batch<R: Rng + ?Sized>(&self, x: &Matrix, rng: &mut R) -> Matrix {
        match self {
            Shift::Clean => x.clone(),
            Shift::Corrupt(op) => op.apply_batch(x, rng),
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Shift::Clean => 0xc1ea,
            Shift::Corrupt(op) => ((op.kind().index() as u64 + 1) << 8) | op.severity() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub shift: Shift,
    pub batches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OrderMode {
    #[default]
    Continual,
    Gradual,
    EasyToHard,
    HardToEasy,
    Custom,
}

impl OrderMode {
    pub fn name(self) -> &'static str {
        match self {
            OrderMode::Continual => "continual",
            OrderMode::Gradual => "gradual",
            OrderMode::EasyToHard => "easy_to_hard",
            OrderMode::HardToEasy => "hard_to_easy",
            OrderMode::Custom => "custom",
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [OrderMode::Continual, OrderMode::Gradual, OrderMode::EasyToHard, OrderMode::HardToEasy, OrderMode::Custom]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| config_err!("unknown order mode `{s}`"))
    }
}

/// Ordered list of shifted segments plus batch size and seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSpec {
    pub segments: Vec<Segment>,
    pub batch_size: usize,
    pub seed: u64,
    pub order_mode: OrderMode,
}

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Severity path of one kind in gradual mode.
pub const GRADUAL_PATH: [u8; 9] = [1, 2, 3, 4, 5, 4, 3, 2, 1];

impl StreamSpec {
    pub fn new(segments: Vec<Segment>, order_mode: OrderMode) -> Self {
        Self { segments, batch_size: DEFAULT_BATCH_SIZE, seed: 0, order_mode }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_batches(&self) -> usize {
        self.segments.iter().map(|s| s.batches).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(config_err!("batch size must be positive"));
        }
        Ok(())
    }

    pub fn manifest(&self) -> Vec<ManifestRow> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| ManifestRow {
                segment: i,
                kind: s.shift.kind_name(),
                severity: s.shift.severity(),
                batches: s.batches,
            })
            .collect()
    }
}

/// One line of the stream manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifestRow {
    pub segment: usize,
    pub kind: &'static str,
    pub severity: u8,
    pub batches: usize,
}

/// Every kind once at severity 5.
pub fn build_continual(kinds: &[CorruptionKind], batches: usize) -> StreamSpec {
    let segments = kinds
        .iter()
        .map(|&k| Segment { shift: Shift::Corrupt(CorruptionOp::new(k, 5).unwrap()), batches })
        .collect();
    StreamSpec::new(segments, OrderMode::Continual)
}

/// Every kind through the severity path 1→5→1, kinds kept disjoint.
pub fn build_gradual(kinds: &[CorruptionKind], batches_per_level: usize) -> StreamSpec {
    let segments = kinds
        .iter()
        .flat_map(|&k| {
            GRADUAL_PATH
                .iter()
                .map(move |&s| Segment { shift: Shift::Corrupt(CorruptionOp::new(k, s).unwrap()), batches: batches_per_level })
        })
        .collect();
    StreamSpec::new(segments, OrderMode::Gradual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    EasyToHard,
    HardToEasy,
}

/// Stable sort of `kinds` by `errors` (ascending for easy-to-hard), ties keep input order.
pub fn order_by_errors(kinds: &[CorruptionKind], errors: &[f64], direction: Direction) -> Result<Vec<CorruptionKind>> {
    if kinds.len() != errors.len() {
        return Err(config_err!("{} kinds but {} errors", kinds.len(), errors.len()));
    }
    let mut idx: Vec<usize> = (0..kinds.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = errors[a].total_cmp(&errors[b]);
        match direction {
            Direction::EasyToHard => ord,
            Direction::HardToEasy => ord.reverse(),
        }
    });
    Ok(idx.into_iter().map(|i| kinds[i]).collect())
}

/// Error of `model` (eval-mode batch norm) on `probe` corrupted by each kind at severity 5.
pub fn source_errors(kinds: &[CorruptionKind], model: &mut Network, probe: &Dataset, seed: u64) -> Result<Vec<f64>> {
    if probe.is_empty() {
        return Err(config_err!("probe set is empty"));
    }
    kinds
        .iter()
        .map(|&k| {
            let op = CorruptionOp::new(k, 5)?;
            let mut rng = rng_from(seed, &[0x9a0b, k.index() as u64]);
            let x = op.apply_batch(&probe.x, &mut rng);
            let pred = model.infer(&x, BnMode::Eval)?.logits.argmax_rows();
            let wrong = pred.iter().zip(&probe.y).filter(|(p, y)| p != y).count();
            Ok(wrong as f64 / probe.len() as f64)
        })
        .collect()
}

/// Continual stream with kinds sorted by the source model's severity-5 error on `probe`.
pub fn order_by_source_error(
    kinds: &[CorruptionKind],
    model: &mut Network,
    probe: &Dataset,
    batches: usize,
    direction: Direction,
    seed: u64,
) -> Result<StreamSpec> {
    let errors = source_errors(kinds, model, probe, seed)?;
    let ordered = order_by_errors(kinds, &errors, direction)?;
    let mut spec = build_continual(&ordered, batches);
    spec.order_mode = match direction {
        Direction::EasyToHard => OrderMode::EasyToHard,
        Direction::HardToEasy => OrderMode::HardToEasy,
    };
    Ok(spec)
}

/// Where clean test inputs come from.
#[derive(Debug, Clone)]
pub enum TestSource {
    /// Fresh draws from the synthetic source distribution.
    Domain(SourceDomain),
    /// Uniform sampling with replacement from a fixed labeled pool.
    Pool(Dataset),
}

impl TestSource {
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Matrix, Vec<usize>) {
        match self {
            TestSource::Domain(d) => {
                let y = d.draw_labels(n, rng);
                (d.draw_batch(&y, rng), y)
            }
            TestSource::Pool(p) => {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..p.len())).collect();
                (p.x.select_rows(&idx), idx.iter().map(|&i| p.y[i]).collect())
            }
        }
    }
}

/// A test batch; labels are for scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub segment: usize,
    pub index_in_segment: usize,
    pub shift: Shift,
    pub x: Matrix,
    pub y: Vec<usize>,
}

/// Single-consumer iterator over the batches of a stream.
///
/// Each segment is seeded by (seed, kind, severity, occurrence of that pair),
/// so a given segment yields the same data regardless of its position.
#[derive(Debug)]
pub struct Stream<'a> {
    spec: &'a StreamSpec,
    source: &'a TestSource,
    segment: usize,
    index: usize,
    rng: Option<StreamRng>,
    seen: Vec<(u64, u64)>,
}

impl<'a> Stream<'a> {
    pub fn new(spec: &'a StreamSpec, source: &'a TestSource) -> Result<Self> {
        spec.validate()?;
        if let (TestSource::Pool(p), true) = (source, spec.total_batches() > 0) {
            if p.is_empty() {
                return Err(config_err!("test pool is empty"));
            }
        }
        Ok(Self { spec, source, segment: 0, index: 0, rng: None, seen: vec![] })
    }

    fn segment_rng(&mut self, shift: &Shift) -> StreamRng {
        let tag = shift.tag();
        let occurrence = match self.seen.iter_mut().find(|(t, _)| *t == tag) {
            Some((_, n)) => {
                *n += 1;
                *n
            }
            None => {
                self.seen.push((tag, 0));
                0
            }
        };
        rng_from(self.spec.seed, &[0x57e4, tag, occurrence])
    }
}

impl Iterator for Stream<'_> {
    type Item = StreamBatch;

    fn next(&mut self) -> Option<StreamBatch> {
        loop {
            let seg = *self.spec.segments.get(self.segment)?;
            if self.index >= seg.batches {
                self.segment += 1;
                self.index = 0;
                self.rng = None;
                continue;
            }
            if self.rng.is_none() {
                self.rng = Some(self.segment_rng(&seg.shift));
            }
            let rng = self.rng.as_mut().unwrap();
            let (clean, y) = self.source.draw(self.spec.batch_size, rng);
            let x = seg.shift.apply_batch(&clean, rng);
            let batch = StreamBatch { segment: self.segment, index_in_segment: self.index, shift: seg.shift, x, y };
            self.index += 1;
            return Some(batch);
        }
    }
}
