use super::prob::{check_same_len, ProbVector, EPS};
use crate::error::{config, Result};

/// `Normalize(q^(1/T))`.
pub fn sharpen(q: &ProbVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(config(format!("temperature {temperature} must be positive")));
    }
    if temperature == 1.0 {
        return Ok(q.clone());
    }
    // Scaling by the max first keeps the largest term at 1 so nothing underflows to an all-zero vector.
    let max = q.as_slice().iter().copied().fold(0.0, f64::max);
    let powered: Vec<f64> = q.as_slice().iter().map(|&p| (p / max).powf(1.0 / temperature)).collect();
    ProbVector::normalize(powered)
}

/// Distribution alignment: `Normalize(q * p_true / p_tilde)`, with `p_tilde`
/// floored at [`EPS`]. If the product vanishes everywhere (the supports of `q`
/// and `p_true` are disjoint) `q` is returned unchanged.
pub fn align(q: &ProbVector, p_true: &ProbVector, p_tilde: &ProbVector) -> Result<ProbVector> {
    check_same_len(q, p_true)?;
    check_same_len(q, p_tilde)?;
    let scaled: Vec<f64> = q
        .as_slice()
        .iter()
        .zip(p_true.as_slice())
        .zip(p_tilde.as_slice())
        .map(|((&qi, &pi), &ti)| qi * pi / ti.max(EPS))
        .collect();
    if scaled.iter().sum::<f64>() <= 0.0 {
        return Ok(q.clone());
    }
    ProbVector::normalize(scaled)
}
