use std::collections::VecDeque;

use super::prob::{mean_distribution, ProbVector};
use crate::error::{contract, Result};

pub const DEFAULT_WINDOW: usize = 128;

/// Running estimates used by distribution alignment: the mean of the last
/// `window` batch-mean predictions on unlabeled data, and cumulative counts of
/// the labels seen.
#[derive(Clone, Debug, PartialEq)]
pub struct GuessState {
    classes: usize,
    window: usize,
    buffer: VecDeque<ProbVector>,
    label_counts: Vec<u64>,
}

impl GuessState {
    pub fn new(classes: usize, window: usize) -> Result<Self> {
        if classes == 0 || window == 0 {
            return Err(contract("guess state needs at least one class and a nonzero window"));
        }
        Ok(Self {
            classes,
            window,
            buffer: VecDeque::with_capacity(window),
            label_counts: vec![0; classes],
        })
    }

    /// Restores a state from its serialized parts.
    pub fn from_parts(window: usize, buffer: Vec<ProbVector>, label_counts: Vec<u64>) -> Result<Self> {
        let mut state = Self::new(label_counts.len(), window)?;
        if buffer.len() > window {
            return Err(contract("buffer longer than its window"));
        }
        for p in buffer {
            state.push(p)?;
        }
        state.label_counts = label_counts;
        Ok(state)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn buffer(&self) -> impl ExactSizeIterator<Item = &ProbVector> {
        self.buffer.iter()
    }

    pub fn label_counts(&self) -> &[u64] {
        &self.label_counts
    }

    fn push(&mut self, p: ProbVector) -> Result<()> {
        if p.len() != self.classes {
            return Err(contract(format!(
                "prediction has {} classes, state has {}",
                p.len(),
                self.classes
            )));
        }
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(p);
        Ok(())
    }

    /// Appends one batch-mean prediction and accumulates label counts.
    pub fn update(&mut self, batch_mean_prediction: &ProbVector, labels_seen: &[u64]) -> Result<()> {
        if labels_seen.len() != self.classes {
            return Err(contract("label count vector has the wrong length"));
        }
        self.push(batch_mean_prediction.clone())?;
        for (c, n) in self.label_counts.iter_mut().zip(labels_seen) {
            *c += n;
        }
        Ok(())
    }

    /// Marginal of the model's predictions; uniform before the first update.
    pub fn p_tilde(&self) -> ProbVector {
        mean_distribution(&self.buffer).unwrap_or_else(|| ProbVector::uniform(self.classes))
    }

    /// Add-one smoothed marginal of the labels seen.
    pub fn p_true(&self) -> ProbVector {
        let total: u64 = self.label_counts.iter().sum();
        let denom = (total + self.classes as u64) as f64;
        ProbVector::from_vec_unchecked(
            self.label_counts.iter().map(|&n| (n + 1) as f64 / denom).collect(),
        )
    }
}
