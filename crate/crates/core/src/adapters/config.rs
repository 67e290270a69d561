use core::fmt;
use core::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::meanteacher::DEFAULT_ALPHA;
use crate::netcore::BnMode;

/// Test-time adaptation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Method {
    SourceOnly,
    Bn1,
    Tent,
    MtCe,
    MtSce,
    #[default]
    Rmt,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::SourceOnly, Method::Bn1, Method::Tent, Method::MtCe, Method::MtSce, Method::Rmt];

    pub fn name(self) -> &'static str {
        match self {
            Method::SourceOnly => "source_only",
            Method::Bn1 => "bn1",
            Method::Tent => "tent",
            Method::MtCe => "mt_ce",
            Method::MtSce => "mt_sce",
            Method::Rmt => "rmt",
        }
    }

    /// Whether the method keeps a student/teacher pair.
    pub fn uses_teacher(self) -> bool {
        matches!(self, Method::MtCe | Method::MtSce | Method::Rmt)
    }

    /// Whether the method takes gradient steps.
    pub fn is_gradient_based(self) -> bool {
        matches!(self, Method::Tent | Method::MtCe | Method::MtSce | Method::Rmt)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| config_err!("unknown method `{s}`"))
    }
}

/// Hyperparameters of an adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    pub method: Method,
    pub lr: f64,
    pub momentum: f64,
    pub updates_per_batch: usize,
    pub alpha: f64,
    pub tau: f64,
    pub lambda_cl: f64,
    pub lambda_ce: f64,
    /// Fraction of the source set kept for replay; 0 is source-free.
    pub replay_fraction: f64,
    /// Source batch size for replay; the test batch size when absent.
    pub replay_batch: Option<usize>,
    /// Sliding-window size `b` for single-sample mode.
    pub window: Option<usize>,
    pub augment_strength: f64,
    /// Predict from the final update's forward pass instead of the first.
    pub predict_after_updates: bool,
    /// Batch-norm mode of the teacher's forward pass.
    pub teacher_bn: BnMode,
    /// Mean-teacher warm-up on source data before deployment.
    pub warmup: bool,
    /// Peak warm-up learning rate; `lr` when absent.
    pub warmup_lr: Option<f64>,
    pub seed: u64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            method: Method::Rmt,
            lr: 1e-2,
            momentum: 0.9,
            updates_per_batch: 1,
            alpha: DEFAULT_ALPHA,
            tau: 0.1,
            lambda_cl: 1.0,
            lambda_ce: 1.0,
            replay_fraction: 0.0,
            replay_batch: None,
            window: None,
            augment_strength: 0.1,
            predict_after_updates: true,
            teacher_bn: BnMode::Recompute,
            warmup: true,
            warmup_lr: None,
            seed: 0,
        }
    }
}

impl AdapterConfig {
    pub fn for_method(method: Method) -> Self {
        Self { method, warmup: method == Method::Rmt, ..Self::default() }
    }

    pub fn source_free(&self) -> bool {
        self.replay_fraction == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(config_err!("lr must be finite and non-negative, got {}", self.lr));
        }
        if let Some(lr) = self.warmup_lr {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(config_err!("warm-up lr must be finite and non-negative, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.updates_per_batch == 0 {
            return Err(config_err!("updates_per_batch must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(config_err!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda_cl >= 0.0 && self.lambda_ce >= 0.0) {
            return Err(config_err!("loss weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(config_err!("replay_fraction must lie in [0, 1], got {}", self.replay_fraction));
        }
        if self.replay_batch == Some(0) {
            return Err(config_err!("replay batch must be positive"));
        }
        if let Some(b) = self.window {
            if b < 2 {
                return Err(config_err!("window size must be at least 2, got {b}"));
            }
        }
        if !(self.augment_strength >= 0.0 && self.augment_strength.is_finite()) {
            return Err(config_err!("augment_strength must be non-negative"));
        }
        if self.teacher_bn == BnMode::Train {
            return Err(config_err!("teacher batch norm cannot run in train mode"));
        }
        Ok(())
    }
}
