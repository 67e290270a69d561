//! Student/teacher pair with exponential-moving-average teacher weights.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{config_err, Error, Result};
use crate::losses;
use crate::netcore::{argmax, sgd_step, softmax_backward, BnMode, Matrix, Network, OutputGrads};

/// Momentum used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.999;

#[derive(Debug, Clone)]
pub struct ModelPair {
    pub student: Network,
    /// Changed only through [`ModelPair::ema_update`].
    teacher: Network,
    alpha: f64,
    steps: usize,
}

impl ModelPair {
    /// Student and teacher both start as exact copies of `source`.
    pub fn new(source: Network, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(config_err!("EMA momentum must lie in (0, 1), got {alpha}"));
        }
        Ok(Self { teacher: source.clone(), student: source, alpha, steps: 0 })
    }

    pub fn teacher(&self) -> &Network {
        &self.teacher
    }

    /// Mutable teacher access for forward passes; BN running statistics are
    /// only touched in [`BnMode::Train`], which callers must not use here.
    pub(crate) fn teacher_mut(&mut self) -> &mut Network {
        &mut self.teacher
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of EMA updates applied so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `θ' ← α·θ' + (1−α)·θ` for every parameter and batch-norm running statistic.
    pub fn ema_update(&mut self) -> Result<()> {
        if !self.teacher.same_layout(&self.student) {
            return Err(Error::Architecture("teacher and student layouts differ".into()));
        }
        let rate = 1.0 - self.alpha;
        // written as p' + (1−α)(p − p') so identical weights stay bit-identical
        let blend = |t: &mut [f64], s: &[f64]| {
            for (tv, sv) in t.iter_mut().zip(s) {
                *tv += rate * (sv - *tv);
            }
        };
        let student_params = self.student.params();
        for (t, s) in self.teacher.params_mut().into_iter().zip(student_params) {
            blend(&mut t.value, &s.value);
        }
        let student_bns: Vec<_> = self.student.batch_norms().collect();
        for (t, s) in self.teacher.batch_norms_mut().zip(student_bns) {
            blend(&mut t.running_mean, &s.running_mean);
            blend(&mut t.running_var, &s.running_var);
        }
        self.steps += 1;
        Ok(())
    }

    /// Sum of student and teacher logits.
    pub fn ensemble_logits(&mut self, x: &Matrix, student_mode: BnMode, teacher_mode: BnMode) -> Result<Matrix> {
        let s = self.student.infer(x, student_mode)?.logits;
        let t = self.teacher.infer(x, teacher_mode)?.logits;
        s.add(&t)
    }

    /// One offline epoch of SCE consistency training on unlabeled source inputs
    /// with a linearly increasing learning rate (`lr_peak·k/steps` at step `k`).
    /// No augmentation is applied. Optimizer momentum is reset afterwards.
    pub fn warmup<R: Rng + ?Sized>(
        &mut self,
        source: &Matrix,
        batch_size: usize,
        epochs: usize,
        lr_peak: f64,
        momentum: f64,
        rng: &mut R,
    ) -> Result<WarmupReport> {
        if epochs == 0 {
            return Ok(WarmupReport::default());
        }
        if source.rows() == 0 {
            return Err(config_err!("warm-up needs source data"));
        }
        if batch_size < 2 {
            return Err(config_err!("warm-up batch size must be at least 2, got {batch_size}"));
        }
        let batch_size = batch_size.min(source.rows());
        let steps_per_epoch = (source.rows() / batch_size).max(1);
        let total = steps_per_epoch * epochs;
        let mut order: Vec<usize> = (0..source.rows()).collect();
        let mut report = WarmupReport::default();
        let mut k = 0;
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks_exact(batch_size).take(steps_per_epoch) {
                k += 1;
                let x = source.select_rows(chunk);
                let q = self.teacher.infer(&x, BnMode::Recompute)?.probs();
                let pass = self.student.forward(&x, BnMode::Recompute)?;
                let p = pass.probs();
                let loss = losses::symmetric_cross_entropy(&q, &p)?;
                let dz = softmax_backward(&p, loss.grad.as_ref().unwrap())?;
                self.student.backward(&pass, OutputGrads { logits: Some(&dz), ..Default::default() })?;
                sgd_step(&mut self.student, lr_peak * k as f64 / total as f64, momentum)?;
                self.ema_update()?;
                report.steps += 1;
                report.final_loss = loss.value;
            }
        }
        for p in self.student.params_mut() {
            p.velocity.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WarmupReport {
    pub steps: usize,
    pub final_loss: f64,
}

/// Row-wise argmax of summed logits, lowest class index on ties.
pub fn ensemble_predictions(student_logits: &Matrix, teacher_logits: &Matrix) -> Result<Vec<usize>> {
    Ok(student_logits.add(teacher_logits)?.iter_rows().map(argmax).collect())
}
