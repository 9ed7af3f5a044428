use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::prob::{check_same_len, ProbVector};
use crate::error::{config, Result};
use crate::imaging::ImageTensor;

pub type Example = (ImageTensor, ProbVector);

/// Draws `lambda ~ Beta(alpha, alpha)`, optionally replaced by
/// `max(lambda, 1 - lambda)` so the first argument dominates.
pub fn sample_mix_weight<R: Rng + ?Sized>(alpha: f64, max_rule: bool, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha).map_err(|e| config(format!("mixup alpha {alpha}: {e}")))?;
    let lambda: f64 = beta.sample(rng);
    Ok(if max_rule { lambda.max(1.0 - lambda) } else { lambda })
}

/// `(lambda * a + (1 - lambda) * b)` for both image and label.
pub fn mix_with_weight(a: &Example, b: &Example, lambda: f64) -> Result<Example> {
    check_same_len(&a.1, &b.1)?;
    let image = a.0.lerp(&b.0, lambda as f32)?;
    let label = a
        .1
        .as_slice()
        .iter()
        .zip(b.1.as_slice())
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    Ok((image, ProbVector::from_vec_unchecked(label)))
}

pub fn mixup<R: Rng + ?Sized>(
    a: &Example,
    b: &Example,
    alpha: f64,
    max_rule: bool,
    rng: &mut R,
) -> Result<Example> {
    let lambda = sample_mix_weight(alpha, max_rule, rng)?;
    mix_with_weight(a, b, lambda)
}
