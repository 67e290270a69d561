//! Flat `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys are rejected with their line number. Lists are
//! comma-separated and optional values accept `none`.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ttalab_core::adapters::{AdapterConfig, Method};
use ttalab_core::bench::{benchmark_adapter, ModelSpec, PretrainConfig};
use ttalab_core::netcore::{Activation, BnMode};
use ttalab_core::streams::{CorruptionKind, OrderMode, SourceSpec, DEFAULT_BATCH_SIZE};

use crate::error::{HarnessError, Result};

/// Test stream layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSection {
    /// Corruption kinds in stream order (before any difficulty ordering).
    pub kinds: Vec<CorruptionKind>,
    pub order: OrderMode,
    /// Batches per segment (per severity level in gradual mode).
    pub batches: usize,
    pub batch_size: usize,
    /// Clean held-out samples used for the source error and difficulty ordering.
    pub probe_size: usize,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self {
            kinds: CorruptionKind::ALL.to_vec(),
            order: OrderMode::Continual,
            batches: 20,
            batch_size: DEFAULT_BATCH_SIZE,
            probe_size: 2000,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: SourceSpec,
    /// Labeled CSV replacing the synthetic source (`y,f0,...`).
    pub dataset_csv: Option<PathBuf>,
    pub model: ModelSpec,
    pub pretrain: PretrainConfig,
    pub stream: StreamSection,
    /// `adapter.seed` is ignored; the run seed is used.
    pub adapter: AdapterConfig,
    /// Warm-up switch; `None` enables it for rmt only.
    pub warmup: Option<bool>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: SourceSpec::default(),
            dataset_csv: None,
            model: ModelSpec::default(),
            pretrain: PretrainConfig::default(),
            stream: StreamSection::default(),
            adapter: benchmark_adapter(Method::Rmt),
            warmup: None,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// All recognized keys in serialization order.
pub const KEYS: &[&str] = &[
    "dataset.classes",
    "dataset.dim",
    "dataset.per_class",
    "dataset.separation",
    "dataset.sigma",
    "dataset.intrinsic_dim",
    "dataset.ambient_sigma",
    "dataset.warp",
    "dataset.imbalance",
    "dataset.csv",
    "model.hidden",
    "model.feature_dim",
    "model.activation",
    "model.batch_norm",
    "pretrain.epochs",
    "pretrain.lr",
    "pretrain.momentum",
    "pretrain.batch_size",
    "stream.kinds",
    "stream.order",
    "stream.batches",
    "stream.batch_size",
    "stream.probe_size",
    "adapter.method",
    "adapter.lr",
    "adapter.momentum",
    "adapter.updates",
    "adapter.alpha",
    "adapter.tau",
    "adapter.lambda_cl",
    "adapter.lambda_ce",
    "adapter.replay_fraction",
    "adapter.replay_batch",
    "adapter.window",
    "adapter.augment",
    "adapter.predict_after_updates",
    "adapter.teacher_bn",
    "adapter.warmup",
    "adapter.warmup_lr",
    "run.seed",
    "run.out",
];

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_f64(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{value}` is not a finite number"))
    }
}

fn parse_opt<T>(value: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Option<T>, String> {
    if value == "none" {
        Ok(None)
    } else {
        f(value).map(Some)
    }
}

fn parse_list<T>(value: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| f(v.trim())).collect()
}

fn fmt_opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
}

fn fmt_list<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_activation(value: &str) -> std::result::Result<Activation, String> {
    match value {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        _ => Err(format!("unknown activation `{value}` (relu, tanh)")),
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
    }
}

fn parse_bn(value: &str) -> std::result::Result<BnMode, String> {
    match value {
        "eval" => Ok(BnMode::Eval),
        "recompute" => Ok(BnMode::Recompute),
        _ => Err(format!("unknown batch-norm mode `{value}` (eval, recompute)")),
    }
}

fn bn_name(m: BnMode) -> &'static str {
    match m {
        BnMode::Train => "train",
        BnMode::Eval => "eval",
        BnMode::Recompute => "recompute",
    }
}

fn parse_warmup(value: &str) -> std::result::Result<Option<bool>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "dataset.classes" => self.dataset.classes = parse(v)?,
            "dataset.dim" => self.dataset.dim = parse(v)?,
            "dataset.per_class" => self.dataset.per_class = parse(v)?,
            "dataset.separation" => self.dataset.separation = parse_f64(v)?,
            "dataset.sigma" => self.dataset.sigma = parse_f64(v)?,
            "dataset.intrinsic_dim" => self.dataset.intrinsic_dim = parse(v)?,
            "dataset.ambient_sigma" => self.dataset.ambient_sigma = parse_f64(v)?,
            "dataset.warp" => self.dataset.warp = parse_f64(v)?,
            "dataset.imbalance" => self.dataset.imbalance = parse_f64(v)?,
            "dataset.csv" => self.dataset_csv = parse_opt(v, |s| Ok(PathBuf::from(s)))?,
            "model.hidden" => self.model.hidden = parse_list(v, parse)?,
            "model.feature_dim" => self.model.feature_dim = parse(v)?,
            "model.activation" => self.model.activation = parse_activation(v)?,
            "model.batch_norm" => self.model.batch_norm = parse(v)?,
            "pretrain.epochs" => self.pretrain.epochs = parse(v)?,
            "pretrain.lr" => self.pretrain.lr = parse_f64(v)?,
            "pretrain.momentum" => self.pretrain.momentum = parse_f64(v)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse(v)?,
            "stream.kinds" => self.stream.kinds = parse_list(v, parse)?,
            "stream.order" => self.stream.order = parse(v)?,
            "stream.batches" => self.stream.batches = parse(v)?,
            "stream.batch_size" => self.stream.batch_size = parse(v)?,
            "stream.probe_size" => self.stream.probe_size = parse(v)?,
            "adapter.method" => self.adapter.method = parse(v)?,
            "adapter.lr" => self.adapter.lr = parse_f64(v)?,
            "adapter.momentum" => self.adapter.momentum = parse_f64(v)?,
            "adapter.updates" => self.adapter.updates_per_batch = parse(v)?,
            "adapter.alpha" => self.adapter.alpha = parse_f64(v)?,
            "adapter.tau" => self.adapter.tau = parse_f64(v)?,
            "adapter.lambda_cl" => self.adapter.lambda_cl = parse_f64(v)?,
            "adapter.lambda_ce" => self.adapter.lambda_ce = parse_f64(v)?,
            "adapter.replay_fraction" => self.adapter.replay_fraction = parse_f64(v)?,
            "adapter.replay_batch" => self.adapter.replay_batch = parse_opt(v, parse)?,
            "adapter.window" => self.adapter.window = parse_opt(v, parse)?,
            "adapter.augment" => self.adapter.augment_strength = parse_f64(v)?,
            "adapter.predict_after_updates" => self.adapter.predict_after_updates = parse(v)?,
            "adapter.teacher_bn" => self.adapter.teacher_bn = parse_bn(v)?,
            "adapter.warmup" => self.warmup = parse_warmup(v)?,
            "adapter.warmup_lr" => self.adapter.warmup_lr = parse_opt(v, parse_f64)?,
            "run.seed" => self.seed = parse(v)?,
            "run.out" => self.out = PathBuf::from(v),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Textual value of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let a = &self.adapter;
        Some(match key {
            "dataset.classes" => self.dataset.classes.to_string(),
            "dataset.dim" => self.dataset.dim.to_string(),
            "dataset.per_class" => self.dataset.per_class.to_string(),
            "dataset.separation" => self.dataset.separation.to_string(),
            "dataset.sigma" => self.dataset.sigma.to_string(),
            "dataset.intrinsic_dim" => self.dataset.intrinsic_dim.to_string(),
            "dataset.ambient_sigma" => self.dataset.ambient_sigma.to_string(),
            "dataset.warp" => self.dataset.warp.to_string(),
            "dataset.imbalance" => self.dataset.imbalance.to_string(),
            "dataset.csv" => fmt_opt(&self.dataset_csv.as_ref().map(|p| p.display())),
            "model.hidden" => fmt_list(&self.model.hidden),
            "model.feature_dim" => self.model.feature_dim.to_string(),
            "model.activation" => activation_name(self.model.activation).to_string(),
            "model.batch_norm" => self.model.batch_norm.to_string(),
            "pretrain.epochs" => self.pretrain.epochs.to_string(),
            "pretrain.lr" => self.pretrain.lr.to_string(),
            "pretrain.momentum" => self.pretrain.momentum.to_string(),
            "pretrain.batch_size" => self.pretrain.batch_size.to_string(),
            "stream.kinds" => fmt_list(&self.stream.kinds),
            "stream.order" => self.stream.order.to_string(),
            "stream.batches" => self.stream.batches.to_string(),
            "stream.batch_size" => self.stream.batch_size.to_string(),
            "stream.probe_size" => self.stream.probe_size.to_string(),
            "adapter.method" => a.method.to_string(),
            "adapter.lr" => a.lr.to_string(),
            "adapter.momentum" => a.momentum.to_string(),
            "adapter.updates" => a.updates_per_batch.to_string(),
            "adapter.alpha" => a.alpha.to_string(),
            "adapter.tau" => a.tau.to_string(),
            "adapter.lambda_cl" => a.lambda_cl.to_string(),
            "adapter.lambda_ce" => a.lambda_ce.to_string(),
            "adapter.replay_fraction" => a.replay_fraction.to_string(),
            "adapter.replay_batch" => fmt_opt(&a.replay_batch),
            "adapter.window" => fmt_opt(&a.window),
            "adapter.augment" => a.augment_strength.to_string(),
            "adapter.predict_after_updates" => a.predict_after_updates.to_string(),
            "adapter.teacher_bn" => bn_name(a.teacher_bn).to_string(),
            "adapter.warmup" => self.warmup.map_or_else(|| "auto".to_string(), |w| w.to_string()),
            "adapter.warmup_lr" => fmt_opt(&a.warmup_lr),
            "run.seed" => self.seed.to_string(),
            "run.out" => self.out.display().to_string(),
            _ => return None,
        })
    }

    /// Parses configuration text; `origin` names the source in error messages.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| HarnessError::ConfigLine { path: origin.to_string(), line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `section.key = value`".into()))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
            seen.push(KEYS.iter().find(|k| **k == key).unwrap());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Every key with its value, grouped by section.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let s = key.split('.').next().unwrap();
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            out.push_str(&format!("{key} = {}\n", self.get(key).unwrap()));
        }
        out
    }

    /// Adapter configuration with the run seed and resolved warm-up switch.
    pub fn resolved_adapter(&self) -> AdapterConfig {
        AdapterConfig {
            seed: self.seed,
            warmup: self.warmup.unwrap_or(self.adapter.method == Method::Rmt),
            ..self.adapter.clone()
        }
    }

    /// Checks cross-field constraints that parsing alone cannot.
    pub fn validate(&self) -> Result<()> {
        if self.dataset_csv.is_none() {
            self.dataset.validate()?;
        }
        self.resolved_adapter().validate()?;
        if self.stream.batch_size == 0 {
            return Err(HarnessError::Config("stream.batch_size must be positive".into()));
        }
        if self.stream.probe_size == 0 {
            return Err(HarnessError::Config("stream.probe_size must be positive".into()));
        }
        if matches!(self.stream.order, OrderMode::EasyToHard | OrderMode::HardToEasy) && self.stream.kinds.is_empty() {
            return Err(HarnessError::Config("difficulty ordering needs at least one kind".into()));
        }
        Ok(())
    }
}
