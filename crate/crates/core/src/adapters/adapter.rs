use alloc::vec::Vec;

use super::config::{AdapterConfig, Method};
use super::objective::{rmt_objective, RmtInputs};
use super::replay::ReplayBuffer;
use crate::error::{config_err, Error, Result};
use crate::losses;
use crate::meanteacher::{ModelPair, WarmupReport};
use crate::netcore::{sgd_step, sgd_step_filtered, softmax_backward, BnMode, Matrix, Network, OutputGrads};
use crate::prototypes::PrototypeBank;
use crate::rng::{rng_from, StreamRng};
use crate::streams::augment;

/// Per-batch record of one adaptation step. Loss components are those of the
/// final update; absent components were not computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepLog {
    pub batch: usize,
    pub size: usize,
    pub lr: f64,
    pub sgd_steps: usize,
    pub ema_updates: usize,
    pub total: Option<f64>,
    /// CE or SCE consistency (mean teachers) or `L_ST` (RMT).
    pub self_training: Option<f64>,
    pub contrastive: Option<f64>,
    pub source_ce: Option<f64>,
    pub entropy: Option<f64>,
    /// `‖θ − θ'‖₂` after the step.
    pub ema_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub predictions: Vec<usize>,
    pub log: StepLog,
}

#[derive(Debug, Clone)]
enum Model {
    Single(Network),
    Pair(ModelPair),
}

/// Online test-time adapter. Sees only unlabeled test inputs.
#[derive(Debug, Clone)]
pub struct Adapter {
    config: AdapterConfig,
    model: Model,
    bank: Option<PrototypeBank>,
    replay: Option<ReplayBuffer>,
    rng: StreamRng,
    batches: usize,
}

impl Adapter {
    /// `bank` is required by RMT; `replay` by RMT with a positive replay fraction.
    pub fn new(
        config: AdapterConfig,
        source: Network,
        bank: Option<PrototypeBank>,
        replay: Option<ReplayBuffer>,
    ) -> Result<Self> {
        config.validate()?;
        if config.method == Method::Rmt {
            let b = bank.as_ref().ok_or_else(|| config_err!("rmt needs a prototype bank"))?;
            if b.dim() != source.feature_dim() || b.class_count() != source.classes() {
                return Err(Error::Architecture(alloc::format!(
                    "prototype bank is {}×{}, network has {} classes and {} features",
                    b.class_count(),
                    b.dim(),
                    source.classes(),
                    source.feature_dim()
                )));
            }
            if !config.source_free() && replay.is_none() {
                return Err(config_err!("replay_fraction > 0 needs a replay buffer"));
            }
        }
        if config.method == Method::Tent && !source.has_batch_norm() {
            log::warn!("tent on a network without batch norm: updates are no-ops");
        }
        let model = if config.method.uses_teacher() {
            Model::Pair(ModelPair::new(source, config.alpha)?)
        } else {
            Model::Single(source)
        };
        let rng = rng_from(config.seed, &[0xada7]);
        Ok(Self { config, model, bank, replay, rng, batches: 0 })
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn method(&self) -> Method {
        self.config.method
    }

    /// The network that is updated by gradient steps.
    pub fn student(&self) -> &Network {
        match &self.model {
            Model::Single(n) => n,
            Model::Pair(p) => &p.student,
        }
    }

    pub fn teacher(&self) -> Option<&Network> {
        match &self.model {
            Model::Single(_) => None,
            Model::Pair(p) => Some(p.teacher()),
        }
    }

    pub fn pair(&self) -> Option<&ModelPair> {
        match &self.model {
            Model::Single(_) => None,
            Model::Pair(p) => Some(p),
        }
    }

    pub fn replay(&self) -> Option<&ReplayBuffer> {
        self.replay.as_ref()
    }

    /// Test batches processed so far.
    pub fn batches(&self) -> usize {
        self.batches
    }

    /// Offline mean-teacher warm-up on unlabeled source inputs. No-op for
    /// methods without a teacher.
    pub fn warmup(&mut self, source: &Matrix, batch_size: usize) -> Result<Option<WarmupReport>> {
        let lr = self.config.warmup_lr.unwrap_or(self.config.lr);
        let momentum = self.config.momentum;
        let mut rng = rng_from(self.config.seed, &[0x3a73]);
        match &mut self.model {
            Model::Pair(pair) => Ok(Some(pair.warmup(source, batch_size, 1, lr, momentum, &mut rng)?)),
            Model::Single(_) => Ok(None),
        }
    }

    /// Predictions with the current weights; changes no state.
    pub fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        let teacher_bn = self.config.teacher_bn;
        let logits = match (&mut self.model, self.config.method) {
            (Model::Single(n), Method::SourceOnly) => n.infer(x, BnMode::Eval)?.logits,
            (Model::Single(n), _) => n.infer(x, BnMode::Recompute)?.logits,
            (Model::Pair(p), Method::Rmt) => p.ensemble_logits(x, BnMode::Recompute, teacher_bn)?,
            (Model::Pair(p), _) => p.teacher_mut().infer(x, teacher_bn)?.logits,
        };
        Ok(logits.argmax_rows())
    }

    /// Processes one test batch: predicts and adapts.
    pub fn step(&mut self, x: &Matrix) -> Result<StepOutput> {
        self.step_with_lr(x, self.config.lr)
    }

    /// [`Adapter::step`] with an explicit learning rate.
    pub fn step_with_lr(&mut self, x: &Matrix, lr: f64) -> Result<StepOutput> {
        if x.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        x.ensure_finite("test batch")?;
        let mut log = StepLog { batch: self.batches, size: x.rows(), lr, ..StepLog::default() };
        let predictions = match self.config.method {
            Method::SourceOnly | Method::Bn1 => self.predict(x)?,
            Method::Tent => self.tent(x, lr, &mut log)?,
            Method::MtCe | Method::MtSce => self.mean_teacher(x, lr, &mut log)?,
            Method::Rmt => self.rmt(x, lr, &mut log)?,
        };
        if let Model::Pair(p) = &self.model {
            log.ema_distance = Some(p.student.param_distance(p.teacher()));
        }
        self.batches += 1;
        Ok(StepOutput { predictions, log })
    }

    fn keep_prediction(&self, update: usize) -> bool {
        if self.config.predict_after_updates {
            update + 1 == self.config.updates_per_batch
        } else {
            update == 0
        }
    }

    fn tent(&mut self, x: &Matrix, lr: f64, log: &mut StepLog) -> Result<Vec<usize>> {
        let mut predictions = Vec::new();
        for u in 0..self.config.updates_per_batch {
            let keep = self.keep_prediction(u);
            let Model::Single(net) = &mut self.model else { unreachable!() };
            let pass = net.forward(x, BnMode::Recompute)?;
            let p = pass.probs();
            if keep {
                predictions = pass.logits.argmax_rows();
            }
            let loss = losses::entropy(&p)?;
            let dz = softmax_backward(&p, loss.grad.as_ref().unwrap())?;
            net.backward(&pass, OutputGrads { logits: Some(&dz), ..Default::default() })?;
            sgd_step_filtered(net, lr, self.config.momentum, |k| k.is_batch_norm())?;
            log.sgd_steps += 1;
            log.entropy = Some(loss.value);
            log.total = Some(loss.value);
        }
        Ok(predictions)
    }

    fn mean_teacher(&mut self, x: &Matrix, lr: f64, log: &mut StepLog) -> Result<Vec<usize>> {
        let sce = self.config.method == Method::MtSce;
        let mut predictions = Vec::new();
        for u in 0..self.config.updates_per_batch {
            let keep = self.keep_prediction(u);
            let Model::Pair(pair) = &mut self.model else { unreachable!() };
            let t_logits = pair.teacher_mut().infer(x, self.config.teacher_bn)?.logits;
            if keep {
                predictions = t_logits.argmax_rows();
            }
            let q = t_logits.softmax_rows();
            let pass = pair.student.forward(x, BnMode::Recompute)?;
            let p = pass.probs();
            let loss = if sce { losses::symmetric_cross_entropy(&q, &p)? } else { losses::cross_entropy(&q, &p)? };
            let dz = softmax_backward(&p, loss.grad.as_ref().unwrap())?;
            pair.student.backward(&pass, OutputGrads { logits: Some(&dz), ..Default::default() })?;
            sgd_step(&mut pair.student, lr, self.config.momentum)?;
            pair.ema_update()?;
            log.sgd_steps += 1;
            log.ema_updates += 1;
            log.self_training = Some(loss.value);
            log.total = Some(loss.value);
        }
        Ok(predictions)
    }

    fn rmt(&mut self, x: &Matrix, lr: f64, log: &mut StepLog) -> Result<Vec<usize>> {
        let cfg = self.config.clone();
        let replay_n = cfg.replay_batch.unwrap_or(x.rows());
        let mut predictions = Vec::new();
        for u in 0..cfg.updates_per_batch {
            let keep = self.keep_prediction(u);
            let x_aug = augment(x, cfg.augment_strength, &mut self.rng);
            let Model::Pair(pair) = &mut self.model else { unreachable!() };
            let bank = self.bank.as_ref().unwrap();

            let t_logits = pair.teacher_mut().infer(x, cfg.teacher_bn)?.logits;
            let q = t_logits.softmax_rows();
            let replay = match (&mut self.replay, cfg.source_free()) {
                (Some(buffer), false) => Some(buffer.sample(replay_n)),
                _ => None,
            };
            let inputs = RmtInputs {
                x,
                x_aug: &x_aug,
                teacher_probs: &q,
                bank,
                tau: cfg.tau,
                lambda_cl: cfg.lambda_cl,
                lambda_ce: cfg.lambda_ce,
                source: replay.as_ref().map(|(xs, ys)| (xs, ys.as_slice())),
            };
            let objective = rmt_objective(&mut pair.student, &inputs)?;
            if keep {
                predictions = objective.logits.add(&t_logits)?.argmax_rows();
            }
            sgd_step(&mut pair.student, lr, cfg.momentum)?;
            pair.ema_update()?;
            let total = objective.loss;
            log.sgd_steps += 1;
            log.ema_updates += 1;
            log.self_training = Some(total.self_training);
            log.contrastive = Some(total.contrastive);
            log.source_ce = total.source_ce;
            log.total = Some(total.total);
        }
        Ok(predictions)
    }
}
