//! Online augmentation policy. Each parameter of each transformation keeps a
//! weight per magnitude bin; training samples only draw from bins whose
//! weight clears the confidence threshold, while update samples draw bins
//! uniformly and feed back how well the model still recognizes the
//! augmented labeled image.

use rand::Rng;

use crate::error::{config, contract, Result};
use crate::imaging::{apply_transform, ImageTensor, TransformKind, TransformSpec};
use crate::pipeline::prob::{check_same_len, ProbVector};

pub const DEFAULT_RHO: f64 = 0.99;
pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_DEPTH: usize = 2;

/// Identifies one bin of one parameter, for feeding a score back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BinHandle {
    pub kind: TransformKind,
    pub param: usize,
    pub bin: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledAugmentation {
    pub specs: Vec<TransformSpec>,
    pub handles: Vec<BinHandle>,
}

impl SampledAugmentation {
    /// Applies the chain of transformations in order.
    pub fn apply<R: Rng + ?Sized>(&self, image: &ImageTensor, rng: &mut R) -> ImageTensor {
        let mut out = image.clone();
        for spec in &self.specs {
            out = apply_transform(&out, spec, rng);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPolicy {
    rho: f64,
    threshold: f64,
    depth: usize,
    /// `[kind][param][bin]`, kinds ordered as [`TransformKind::ALL`].
    weights: Vec<Vec<Vec<f64>>>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::new(DEFAULT_RHO, DEFAULT_THRESHOLD, DEFAULT_DEPTH).expect("valid defaults")
    }
}

impl AugmentPolicy {
    /// Fresh policy with every bin weight set to 1.
    pub fn new(rho: f64, threshold: f64, depth: usize) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(config(format!("rho {rho} must lie in (0, 1)")));
        }
        if !(0.0..1.0).contains(&threshold) {
            return Err(config(format!("threshold {threshold} must lie in [0, 1)")));
        }
        if depth == 0 {
            return Err(config("augmentation depth must be at least 1"));
        }
        let weights = TransformKind::ALL
            .iter()
            .map(|k| k.params().iter().map(|p| vec![1.0; p.bins()]).collect())
            .collect();
        Ok(Self {
            rho,
            threshold,
            depth,
            weights,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn weights(&self, kind: TransformKind, param: usize) -> &[f64] {
        &self.weights[kind.index()][param]
    }

    /// Overwrites one weight table, e.g. when restoring a checkpoint.
    pub fn set_weights(&mut self, kind: TransformKind, param: usize, weights: &[f64]) -> Result<()> {
        let slot = self.weights[kind.index()]
            .get_mut(param)
            .ok_or_else(|| contract(format!("{kind} has no parameter {param}")))?;
        if slot.len() != weights.len() {
            return Err(contract(format!(
                "{kind} parameter {param} has {} bins, got {}",
                slot.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(contract("bin weights must lie in [0, 1]"));
        }
        slot.copy_from_slice(weights);
        Ok(())
    }

    /// Every `(kind, param, weights)` table in a fixed order.
    pub fn tables(&self) -> impl Iterator<Item = (TransformKind, usize, &[f64])> + '_ {
        TransformKind::ALL.iter().zip(&self.weights).flat_map(|(&kind, params)| {
            params.iter().enumerate().map(move |(p, w)| (kind, p, w.as_slice()))
        })
    }

    /// Distribution used for training samples: weights at or below the
    /// threshold are zeroed, then normalized. `None` when no bin qualifies.
    pub fn training_distribution(&self, kind: TransformKind, param: usize) -> Option<Vec<f64>> {
        let masked: Vec<f64> = self
            .weights(kind, param)
            .iter()
            .map(|&m| if m > self.threshold { m } else { 0.0 })
            .collect();
        let total: f64 = masked.iter().sum();
        (total > 0.0).then(|| masked.into_iter().map(|m| m / total).collect())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, thresholded: bool) -> SampledAugmentation {
        let mut specs = Vec::with_capacity(self.depth);
        let mut handles = Vec::new();
        for _ in 0..self.depth {
            let kind = TransformKind::ALL[rng.random_range(0..TransformKind::ALL.len())];
            let bins: Vec<usize> = (0..kind.params().len())
                .map(|p| {
                    let n = self.weights(kind, p).len();
                    let dist = if thresholded { self.training_distribution(kind, p) } else { None };
                    match dist {
                        Some(probs) => sample_categorical(&probs, rng),
                        None => rng.random_range(0..n),
                    }
                })
                .collect();
            handles.extend(bins.iter().enumerate().map(|(param, &bin)| BinHandle { kind, param, bin }));
            specs.push(TransformSpec::sample_in_bins(kind, &bins, rng).expect("bins drawn in range"));
        }
        SampledAugmentation { specs, handles }
    }

    /// `depth` uniformly chosen transformations with bins drawn from the
    /// thresholded weights. If every bin of a parameter is at or below the
    /// threshold, that parameter falls back to a uniform bin.
    pub fn sample_for_training<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledAugmentation {
        self.sample(rng, true)
    }

    /// `depth` uniformly chosen transformations with uniformly drawn bins,
    /// regardless of the current weights.
    pub fn sample_for_update<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledAugmentation {
        self.sample(rng, false)
    }

    /// `m <- rho * m + (1 - rho) * omega` for every handled bin.
    pub fn update_weights(&mut self, handles: &[BinHandle], omega: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(contract(format!("score {omega} outside [0, 1]")));
        }
        for h in handles {
            let slot = self.weights[h.kind.index()]
                .get_mut(h.param)
                .and_then(|w| w.get_mut(h.bin))
                .ok_or_else(|| contract(format!("invalid handle {h:?}")))?;
            *slot = self.rho * *slot + (1.0 - self.rho) * omega;
        }
        Ok(())
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `omega = 1 - (1 / 2L) * sum_i |prediction_i - label_i|`.
pub fn match_score(prediction: &ProbVector, label: &ProbVector) -> Result<f64> {
    check_same_len(prediction, label)?;
    let l1: f64 = prediction
        .as_slice()
        .iter()
        .zip(label.as_slice())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok((1.0 - l1 / (2.0 * prediction.len() as f64)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_policy_is_all_ones() {
        let p = AugmentPolicy::default();
        assert_eq!((p.rho(), p.threshold(), p.depth()), (0.99, 0.8, 2));
        assert!(p.tables().all(|(_, _, w)| w.iter().all(|&m| m == 1.0)));
        // Identity has no parameters; rescale has two.
        assert_eq!(p.tables().count(), 19);
        let d = p.training_distribution(TransformKind::Rotate, 0).unwrap();
        assert!(d.iter().all(|&x| (x - 1.0 / 17.0).abs() < 1e-12));
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(AugmentPolicy::new(1.5, 0.8, 2).is_err());
        assert!(AugmentPolicy::new(0.0, 0.8, 2).is_err());
        assert!(AugmentPolicy::new(0.99, 1.0, 2).is_err());
        assert!(AugmentPolicy::new(0.99, 0.8, 0).is_err());
    }

    #[test]
    fn match_score_examples() {
        let a = ProbVector::one_hot(2, 0);
        let b = ProbVector::one_hot(2, 1);
        assert_eq!(match_score(&a, &a).unwrap(), 1.0);
        assert!((match_score(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let u = ProbVector::uniform(10);
        let h = ProbVector::one_hot(10, 3);
        assert!((match_score(&u, &h).unwrap() - 0.91).abs() < 1e-12);
        assert!(match_score(&u, &a).is_err());
    }

    #[test]
    fn single_update_arithmetic() {
        let mut p = AugmentPolicy::default();
        let h = BinHandle { kind: TransformKind::Rotate, param: 0, bin: 3 };
        p.update_weights(&[h], 0.5).unwrap();
        assert!((p.weights(TransformKind::Rotate, 0)[3] - 0.995).abs() < 1e-12);
        // Locality.
        assert!(p.weights(TransformKind::Rotate, 0).iter().enumerate().all(|(i, &m)| i == 3 || m == 1.0));
        assert!(p.update_weights(&[h], 1.5).is_err());
    }

    #[test]
    fn fixed_point_is_stable() {
        let mut p = AugmentPolicy::default();
        let h = BinHandle { kind: TransformKind::Invert, param: 0, bin: 0 };
        p.update_weights(&[h], 1.0).unwrap();
        assert_eq!(p.weights(TransformKind::Invert, 0)[0], 1.0);
    }

    #[test]
    fn depth_controls_chain_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for depth in 1..4 {
            let p = AugmentPolicy::new(0.99, 0.8, depth).unwrap();
            assert_eq!(p.sample_for_update(&mut rng).specs.len(), depth);
            assert_eq!(p.sample_for_training(&mut rng).specs.len(), depth);
        }
    }

    #[test]
    fn handles_cover_every_parameter() {
        let p = AugmentPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = p.sample_for_update(&mut rng);
            let want: usize = s.specs.iter().map(|sp| sp.kind().params().len()).sum();
            assert_eq!(s.handles.len(), want);
            for (h, spec) in s.handles.iter().zip(s.specs.iter().flat_map(|sp| {
                sp.params().iter().map(move |pv| (sp.kind(), pv.bin))
            })) {
                assert_eq!((h.kind, h.bin), spec);
            }
        }
    }

    #[test]
    fn below_threshold_bin_is_never_drawn() {
        let mut p = AugmentPolicy::default();
        let mut w = vec![1.0; 17];
        w[1] = 0.5;
        for kind in TransformKind::ALL {
            for param in 0..kind.params().len() {
                if p.weights(kind, param).len() == 17 {
                    p.set_weights(kind, param, &w).unwrap();
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20_000 {
            let s = p.sample_for_training(&mut rng);
            for h in &s.handles {
                if p.weights(h.kind, h.param).len() == 17 {
                    assert_ne!(h.bin, 1);
                }
            }
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let p = AugmentPolicy::default();
        let a = p.sample_for_training(&mut ChaCha8Rng::seed_from_u64(42));
        let b = p.sample_for_training(&mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }
}
