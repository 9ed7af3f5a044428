use std::ops::Index;

use crate::error::{contract, Result};

/// Floor applied to every denominator and log argument.
pub const EPS: f64 = 1e-6;
const SUM_TOLERANCE: f64 = 1e-6;

/// A categorical distribution over `L` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates that `values` is nonnegative, finite and sums to one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(contract("probability vector must be nonempty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(contract(format!("invalid probabilities {values:?}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(contract(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    /// `Normalize(x)_i = x_i / sum_j x_j` for nonnegative weights with a
    /// positive total.
    pub fn normalize(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(contract(format!("cannot normalize {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(contract("cannot normalize an all-zero vector"));
        }
        Ok(Self(weights.into_iter().map(|v| v / sum).collect()))
    }

    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0, "zero classes");
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn one_hot(classes: usize, class: usize) -> Self {
        assert!(class < classes, "class {class} out of range for {classes}");
        let mut v = vec![0.0; classes];
        v[class] = 1.0;
        Self(v)
    }

    /// Softmax of raw scores, computed with the max subtracted.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Self(exps.into_iter().map(|e| e / sum).collect())
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats; `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Elementwise mean of equally-sized distributions.
pub fn mean_distribution<'a>(dists: impl IntoIterator<Item = &'a ProbVector>) -> Option<ProbVector> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for d in dists {
        let a = acc.get_or_insert_with(|| vec![0.0; d.len()]);
        for (s, v) in a.iter_mut().zip(d.as_slice()) {
            *s += v;
        }
        n += 1;
    }
    acc.map(|a| ProbVector(a.into_iter().map(|s| s / n as f64).collect()))
}

pub(crate) fn check_same_len(a: &ProbVector, b: &ProbVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(contract(format!(
            "distribution lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
