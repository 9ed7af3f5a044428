use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::guess::GuessState;
use super::mixup::Example;
use super::prob::ProbVector;
use super::targets::{align, sharpen};
use crate::ctaugment::AugmentPolicy;
use crate::error::{contract, Result};
use crate::imaging::{rotate90, weak_augment, ImageTensor};
use crate::rng::stream_rng;

/// Anything that maps images to class distributions.
pub trait Predictor {
    fn predict(&self, images: &[ImageTensor]) -> Result<Vec<ProbVector>>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakAugment {
    pub flip: bool,
    pub max_shift: f32,
}

impl Default for WeakAugment {
    fn default() -> Self {
        Self { flip: true, max_shift: 0.125 }
    }
}

impl WeakAugment {
    pub fn apply<R: Rng + ?Sized>(&self, image: &ImageTensor, rng: &mut R) -> Result<ImageTensor> {
        weak_augment(image, self.flip, self.max_shift, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchConfig {
    /// Strong augmentations per unlabeled image.
    pub k: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub align: bool,
    pub mixup_max_rule: bool,
    pub weak: WeakAugment,
    /// When false, "strong" views are produced by the weak augmentation.
    pub strong_enabled: bool,
    /// When false, the anchor view is produced by the strong augmentation.
    pub weak_enabled: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            k: 2,
            temperature: 0.5,
            alpha: 0.75,
            align: true,
            mixup_max_rule: true,
            weak: WeakAugment::default(),
            strong_enabled: true,
            weak_enabled: true,
        }
    }
}

/// Output of one batch assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    /// `B` mixed labeled examples.
    pub labeled: Vec<Example>,
    /// `B * (K + 1)` mixed unlabeled examples.
    pub unlabeled: Vec<Example>,
    /// `B` first strong views with their guesses, not mixed.
    pub premix: Vec<Example>,
    /// Processed guess per unlabeled image.
    pub guesses: Vec<ProbVector>,
    /// Raw model prediction on each anchor view, before alignment.
    pub weak_predictions: Vec<ProbVector>,
}

impl MixedBatch {
    /// Elementwise mean of the raw anchor predictions.
    pub fn mean_weak_prediction(&self) -> Option<ProbVector> {
        super::prob::mean_distribution(&self.weak_predictions)
    }
}

/// Flip-and-shift followed by a policy-sampled transformation chain.
pub fn strong_augment<R: Rng + ?Sized>(
    image: &ImageTensor,
    policy: &AugmentPolicy,
    weak: &WeakAugment,
    rng: &mut R,
) -> Result<ImageTensor> {
    let base = weak.apply(image, rng)?;
    let chain = policy.sample_for_training(rng);
    Ok(chain.apply(&base, rng))
}

// Stream tags for derived randomness.
const STREAM_LABELED: u64 = 1;
const STREAM_UNLABELED: u64 = 2;
const STREAM_MIX: u64 = 3;

/// Assembles the mixed labeled set, the mixed unlabeled set and the
/// un-mixed first strong views for one step:
///
/// 1. each labeled image gets one strong augmentation, each unlabeled image
///    `K` strong augmentations and one weak anchor;
/// 2. the guess for each unlabeled image is the model's prediction on the
///    anchor, aligned with `p(y) / p~(y)` and sharpened, and is shared by all
///    `K + 1` of its views;
/// 3. labeled and unlabeled examples are concatenated and shuffled, labeled
///    examples are mixed with the first `B` shuffled entries and unlabeled
///    examples with the rest.
///
/// Randomness is derived from `seed` per example, so the result does not
/// depend on how augmentation work is scheduled.
pub fn remixmatch_batch<P: Predictor + ?Sized>(
    labeled: &[Example],
    unlabeled: &[ImageTensor],
    policy: &AugmentPolicy,
    guess: &GuessState,
    model: &P,
    cfg: &BatchConfig,
    seed: u64,
) -> Result<MixedBatch> {
    let b = labeled.len();
    if b == 0 {
        return Err(contract("empty batch"));
    }
    if unlabeled.len() != b {
        return Err(contract(format!(
            "labeled batch has {b} examples but unlabeled batch has {}",
            unlabeled.len()
        )));
    }
    if cfg.k == 0 {
        return Err(contract("K must be at least 1"));
    }

    let strong = |img: &ImageTensor, rng: &mut rand_chacha::ChaCha8Rng| {
        if cfg.strong_enabled {
            strong_augment(img, policy, &cfg.weak, rng)
        } else {
            cfg.weak.apply(img, rng)
        }
    };

    let x_hat: Vec<Example> = labeled
        .par_iter()
        .enumerate()
        .map(|(i, (img, p))| {
            let mut rng = stream_rng(seed, STREAM_LABELED, i as u64);
            Ok((strong(img, &mut rng)?, p.clone()))
        })
        .collect::<Result<_>>()?;

    // (K strong views, anchor) per unlabeled image.
    let views: Vec<(Vec<ImageTensor>, ImageTensor)> = unlabeled
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let mut rng = stream_rng(seed, STREAM_UNLABELED, i as u64);
            let strong_views = (0..cfg.k).map(|_| strong(img, &mut rng)).collect::<Result<Vec<_>>>()?;
            let anchor = if cfg.weak_enabled {
                cfg.weak.apply(img, &mut rng)?
            } else {
                strong_augment(img, policy, &cfg.weak, &mut rng)?
            };
            Ok((strong_views, anchor))
        })
        .collect::<Result<_>>()?;

    let anchors: Vec<ImageTensor> = views.iter().map(|(_, a)| a.clone()).collect();
    let weak_predictions = model.predict(&anchors)?;
    if weak_predictions.len() != b {
        return Err(contract("predictor returned the wrong number of outputs"));
    }
    let (p_true, p_tilde) = (guess.p_true(), guess.p_tilde());
    let guesses = weak_predictions
        .iter()
        .map(|q| {
            let q = if cfg.align { align(q, &p_true, &p_tilde)? } else { q.clone() };
            sharpen(&q, cfg.temperature)
        })
        .collect::<Result<Vec<_>>>()?;

    let premix: Vec<Example> = views
        .iter()
        .zip(&guesses)
        .map(|((s, _), q)| (s[0].clone(), q.clone()))
        .collect();
    let mut u_hat: Vec<Example> = Vec::with_capacity(b * (cfg.k + 1));
    for ((strong_views, _), q) in views.iter().zip(&guesses) {
        u_hat.extend(strong_views.iter().map(|v| (v.clone(), q.clone())));
    }
    for (anchor, q) in anchors.into_iter().zip(&guesses) {
        u_hat.push((anchor, q.clone()));
    }

    let mut mix_rng = stream_rng(seed, STREAM_MIX, 0);
    let mut w: Vec<&Example> = x_hat.iter().chain(&u_hat).collect();
    w.shuffle(&mut mix_rng);
    let lambdas: Vec<f64> = (0..w.len())
        .map(|_| super::mixup::sample_mix_weight(cfg.alpha, cfg.mixup_max_rule, &mut mix_rng))
        .collect::<Result<_>>()?;

    let mix_all = |items: &[Example], offset: usize| -> Result<Vec<Example>> {
        items
            .par_iter()
            .enumerate()
            .map(|(i, e)| super::mixup::mix_with_weight(e, w[i + offset], lambdas[i + offset]))
            .collect()
    };
    let labeled_mixed = mix_all(&x_hat, 0)?;
    let unlabeled_mixed = mix_all(&u_hat, b)?;

    Ok(MixedBatch {
        labeled: labeled_mixed,
        unlabeled: unlabeled_mixed,
        premix,
        guesses,
        weak_predictions,
    })
}

/// Rotates each image by the given quarter turns.
pub fn rotation_batch_with_turns(images: &[ImageTensor], turns: &[u8]) -> Result<Vec<ImageTensor>> {
    if images.len() != turns.len() {
        return Err(contract("one rotation per image required"));
    }
    images.iter().zip(turns).map(|(img, &t)| rotate90(img, t)).collect()
}

/// Rotates each image by an independent, uniformly drawn quarter turn and
/// returns the turn counts as labels (`0 -> 0`, `1 -> 90`, `2 -> 180`,
/// `3 -> 270` degrees counter-clockwise).
pub fn make_rotation_batch<R: Rng + ?Sized>(
    images: &[ImageTensor],
    rng: &mut R,
) -> Result<(Vec<ImageTensor>, Vec<u8>)> {
    let turns: Vec<u8> = images.iter().map(|_| rng.random_range(0..4u8)).collect();
    Ok((rotation_batch_with_turns(images, &turns)?, turns))
}
