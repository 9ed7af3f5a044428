use super::prob::{check_same_len, mean_distribution, ProbVector, EPS};
use crate::error::{contract, Result};

/// `KL(p || q) = sum_i p_i ln(p_i / q_i)`, both arguments floored at [`EPS`].
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_same_len(p, q)?;
    let kl: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.max(EPS) / qi.max(EPS)).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// Entropy of the mean prediction, mean entropy of the predictions, and
/// their difference (the input-output mutual information under a uniform
/// distribution over the inputs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutualInfo {
    pub fairness: f64,
    pub confidence: f64,
    pub mutual_information: f64,
}

pub fn mutual_info_decomposition(predictions: &[ProbVector]) -> Result<MutualInfo> {
    let first = predictions
        .first()
        .ok_or_else(|| contract("need at least one prediction"))?;
    for p in predictions {
        check_same_len(first, p)?;
    }
    let mean = mean_distribution(predictions).expect("nonempty");
    let fairness = mean.entropy();
    let confidence = predictions.iter().map(ProbVector::entropy).sum::<f64>() / predictions.len() as f64;
    Ok(MutualInfo {
        fairness,
        confidence,
        mutual_information: fairness - confidence,
    })
}
