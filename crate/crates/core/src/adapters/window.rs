use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::adapter::{Adapter, StepLog};
use crate::error::{config_err, shape_err, Result};
use crate::netcore::Matrix;

/// Single-sample mode: buffers the last `b` test samples, predicts each new
/// sample from a forward pass over the whole buffer and adapts every `b`
/// pushes with the learning rate scaled by `b / reference_batch`.
#[derive(Debug, Clone)]
pub struct WindowAdapter {
    adapter: Adapter,
    window: usize,
    reference_batch: usize,
    buffer: VecDeque<Vec<f64>>,
    pushes: usize,
}

/// Outcome of one [`WindowAdapter::push`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub prediction: usize,
    /// Present when this push triggered an update.
    pub log: Option<StepLog>,
}

impl WindowAdapter {
    pub fn new(adapter: Adapter, window: usize, reference_batch: usize) -> Result<Self> {
        if window < 2 {
            return Err(config_err!("window size must be at least 2, got {window}"));
        }
        if reference_batch == 0 {
            return Err(config_err!("reference batch size must be positive"));
        }
        Ok(Self { adapter, window, reference_batch, buffer: VecDeque::with_capacity(window), pushes: 0 })
    }

    pub fn adapter(&self) -> &Adapter {
        &self.adapter
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn pushes(&self) -> usize {
        self.pushes
    }

    /// Learning rate used for window updates.
    pub fn scaled_lr(&self) -> f64 {
        self.adapter.config().lr * self.window as f64 / self.reference_batch as f64
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<WindowOutput> {
        if sample.len() != self.adapter.student().input_dim() {
            return Err(shape_err!("sample has {} features, expected {}", sample.len(), self.adapter.student().input_dim()));
        }
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample.to_vec());
        self.pushes += 1;
        let rows: Vec<&[f64]> = self.buffer.iter().map(Vec::as_slice).collect();
        let x = Matrix::from_rows(&rows)?;
        if self.pushes.is_multiple_of(self.window) {
            let out = self.adapter.step_with_lr(&x, self.scaled_lr())?;
            Ok(WindowOutput { prediction: *out.predictions.last().unwrap(), log: Some(out.log) })
        } else {
            let pred = self.adapter.predict(&x)?;
            Ok(WindowOutput { prediction: *pred.last().unwrap(), log: None })
        }
    }
}
