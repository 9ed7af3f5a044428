use super::batch::MixedBatch;
use super::prob::{check_same_len, ProbVector, EPS};
use crate::error::{contract, Result};

/// `H(target, predicted) = -sum_i target_i ln(predicted_i)`, with
/// `predicted` floored at [`EPS`].
pub fn cross_entropy(target: &ProbVector, predicted: &ProbVector) -> Result<f64> {
    check_same_len(target, predicted)?;
    Ok(-target
        .as_slice()
        .iter()
        .zip(predicted.as_slice())
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| t * p.max(EPS).ln())
        .sum::<f64>())
}

/// Brier-style squared error averaged over classes.
pub fn squared_error(target: &ProbVector, predicted: &ProbVector) -> Result<f64> {
    check_same_len(target, predicted)?;
    let n = target.len() as f64;
    Ok(target
        .as_slice()
        .iter()
        .zip(predicted.as_slice())
        .map(|(t, p)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_u: f64,
    pub lambda_u1: f64,
    pub lambda_r: f64,
    pub rotation: bool,
    pub premix: bool,
    /// Squared error instead of cross-entropy on the mixed unlabeled group.
    pub l2_unlabeled: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_u: 1.5,
            lambda_u1: 0.5,
            lambda_r: 0.5,
            rotation: true,
            premix: true,
            l2_unlabeled: false,
        }
    }
}

impl LossWeights {
    fn premix_weight(&self) -> f64 {
        if self.premix {
            self.lambda_u1
        } else {
            0.0
        }
    }

    fn rotation_weight(&self) -> f64 {
        if self.rotation {
            self.lambda_r
        } else {
            0.0
        }
    }
}

/// Weighted contribution of each loss term; the total is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub supervised: f64,
    pub unlabeled: f64,
    pub premix: f64,
    pub rotation: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.supervised + self.unlabeled + self.premix + self.rotation
    }
}

/// Model outputs for each example group of a step.
#[derive(Clone, Debug, Default)]
pub struct GroupOutputs {
    /// Class head on the mixed labeled examples.
    pub labeled: Vec<ProbVector>,
    /// Class head on the mixed unlabeled examples.
    pub unlabeled: Vec<ProbVector>,
    /// Class head on the un-mixed first strong views.
    pub premix: Vec<ProbVector>,
    /// Rotation head on the rotated first strong views.
    pub rotation: Vec<ProbVector>,
}

/// Loss gradients with respect to the logits of the relevant head, one row
/// per example, grouped like [`GroupOutputs`].
#[derive(Clone, Debug, Default)]
pub struct GroupGradients {
    pub labeled: Vec<Vec<f64>>,
    pub unlabeled: Vec<Vec<f64>>,
    pub premix: Vec<Vec<f64>>,
    pub rotation: Vec<Vec<f64>>,
}

fn check_group(name: &str, targets: usize, outputs: usize) -> Result<()> {
    if targets != outputs {
        return Err(contract(format!("{name}: {targets} targets but {outputs} outputs")));
    }
    Ok(())
}

fn mean_of<'a>(
    targets: impl Iterator<Item = &'a ProbVector>,
    outputs: &[ProbVector],
    f: fn(&ProbVector, &ProbVector) -> Result<f64>,
) -> Result<f64> {
    if outputs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (t, p) in targets.zip(outputs) {
        sum += f(t, p)?;
    }
    Ok(sum / outputs.len() as f64)
}

fn rotation_targets(labels: &[u8]) -> Vec<ProbVector> {
    labels.iter().map(|&r| ProbVector::one_hot(4, r as usize)).collect()
}

/// Four-term objective: supervised cross-entropy on the mixed labeled group,
/// `lambda_u` times the unlabeled term on the mixed unlabeled group,
/// `lambda_u1` times cross-entropy on the un-mixed first strong views, and
/// `lambda_r` times the rotation cross-entropy. Each term is a mean over its
/// group.
pub fn total_loss(
    mixed: &MixedBatch,
    rotation_labels: &[u8],
    outputs: &GroupOutputs,
    weights: &LossWeights,
) -> Result<(f64, LossBreakdown)> {
    check_group("labeled", mixed.labeled.len(), outputs.labeled.len())?;
    check_group("unlabeled", mixed.unlabeled.len(), outputs.unlabeled.len())?;
    check_group("premix", mixed.premix.len(), outputs.premix.len())?;
    check_group("rotation", rotation_labels.len(), outputs.rotation.len())?;

    let unlabeled_fn = if weights.l2_unlabeled { squared_error } else { cross_entropy };
    let rot = rotation_targets(rotation_labels);
    let breakdown = LossBreakdown {
        supervised: mean_of(mixed.labeled.iter().map(|e| &e.1), &outputs.labeled, cross_entropy)?,
        unlabeled: weights.lambda_u
            * mean_of(mixed.unlabeled.iter().map(|e| &e.1), &outputs.unlabeled, unlabeled_fn)?,
        premix: weights.premix_weight()
            * mean_of(mixed.premix.iter().map(|e| &e.1), &outputs.premix, cross_entropy)?,
        rotation: weights.rotation_weight() * mean_of(rot.iter(), &outputs.rotation, cross_entropy)?,
    };
    Ok((breakdown.total(), breakdown))
}

/// Gradient of `scale * H(target, softmax(z))` with respect to `z`.
pub fn cross_entropy_logit_grad(target: &ProbVector, predicted: &ProbVector, scale: f64) -> Vec<f64> {
    predicted
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| scale * (p - t))
        .collect()
}

/// Gradient of `scale * squared_error(target, softmax(z))` with respect to `z`.
pub fn squared_error_logit_grad(target: &ProbVector, predicted: &ProbVector, scale: f64) -> Vec<f64> {
    let n = target.len() as f64;
    let p = predicted.as_slice();
    let dp: Vec<f64> = p
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| scale * 2.0 * (p - t) / n)
        .collect();
    let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
    p.iter().zip(&dp).map(|(pi, gi)| pi * (gi - dot)).collect()
}

fn group_grads<'a>(
    targets: impl Iterator<Item = &'a ProbVector>,
    outputs: &[ProbVector],
    weight: f64,
    l2: bool,
) -> Vec<Vec<f64>> {
    let scale = if outputs.is_empty() { 0.0 } else { weight / outputs.len() as f64 };
    targets
        .zip(outputs)
        .map(|(t, p)| {
            if l2 {
                squared_error_logit_grad(t, p, scale)
            } else {
                cross_entropy_logit_grad(t, p, scale)
            }
        })
        .collect()
}

/// Logit gradients of [`total_loss`] (ignoring the [`EPS`] floor).
pub fn loss_gradients(
    mixed: &MixedBatch,
    rotation_labels: &[u8],
    outputs: &GroupOutputs,
    weights: &LossWeights,
) -> Result<GroupGradients> {
    check_group("labeled", mixed.labeled.len(), outputs.labeled.len())?;
    check_group("unlabeled", mixed.unlabeled.len(), outputs.unlabeled.len())?;
    check_group("premix", mixed.premix.len(), outputs.premix.len())?;
    check_group("rotation", rotation_labels.len(), outputs.rotation.len())?;
    let rot = rotation_targets(rotation_labels);
    Ok(GroupGradients {
        labeled: group_grads(mixed.labeled.iter().map(|e| &e.1), &outputs.labeled, 1.0, false),
        unlabeled: group_grads(
            mixed.unlabeled.iter().map(|e| &e.1),
            &outputs.unlabeled,
            weights.lambda_u,
            weights.l2_unlabeled,
        ),
        premix: group_grads(mixed.premix.iter().map(|e| &e.1), &outputs.premix, weights.premix_weight(), false),
        rotation: group_grads(rot.iter(), &outputs.rotation, weights.rotation_weight(), false),
    })
}
