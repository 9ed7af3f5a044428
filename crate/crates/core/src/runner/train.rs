use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use super::checkpoint::Checkpoint;
use super::metrics::{MetricsRow, METRICS_HEADER};
use super::{TrainConfig, TrainMode};
use crate::ctaugment::{match_score, AugmentPolicy};
use crate::data::{make_ssl_split_with, BatchStream, Dataset};
use crate::error::{config, contract, Result};
use crate::imaging::ImageTensor;
use crate::model::{adam_step, backward, ema_update, forward, predict, Architecture, ClassifierRef, ModelParams, OptimizerState};
use crate::pipeline::{
    cross_entropy, cross_entropy_logit_grad, kl_divergence, loss_gradients, mutual_info_decomposition,
    remixmatch_batch, rotation_batch_with_turns, total_loss, Example, GroupOutputs, GuessState,
    LossBreakdown, MixedBatch, ProbVector,
};
use crate::rng::{derive_seed, stream_rng};

const STREAM_INIT: u64 = 10;
const STREAM_STEP: u64 = 11;
const STREAM_SPLIT: u64 = 12;
const STREAM_BATCHES: u64 = 13;
const SUB_CTA: u64 = 0;
const SUB_ROTATION: u64 = 1;
const SUB_WEAK: u64 = 2;

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub arch: Architecture,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub policy: AugmentPolicy,
    pub guess: GuessState,
    pub step: u64,
}

impl TrainState {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            arch: self.arch.clone(),
            step: self.step,
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            policy: self.policy.clone(),
            guess: self.guess.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    /// EMA test error on the full test set after the last step.
    pub final_error: f64,
    pub state: TrainState,
}

/// Fraction of predictions whose argmax differs from the label.
pub fn error_rate(predictions: &[ProbVector], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(contract("one prediction per label required"));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let wrong = predictions.iter().zip(labels).filter(|(p, &l)| p.argmax() != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

pub fn evaluate_params(arch: &Architecture, params: &ModelParams, dataset: &Dataset) -> Result<f64> {
    if dataset.classes > arch.classes {
        return Err(contract(format!(
            "dataset has {} classes but the model predicts {}",
            dataset.classes, arch.classes
        )));
    }
    if let Some(shape) = dataset.image_shape() {
        if shape != (arch.height, arch.width, arch.channels) {
            return Err(contract(format!(
                "dataset images are {shape:?} but the model expects {:?}",
                (arch.height, arch.width, arch.channels)
            )));
        }
    }
    error_rate(&predict(arch, params, &dataset.images)?, &dataset.labels)
}

/// Error rate of a checkpoint's EMA weights.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<f64> {
    evaluate_params(&checkpoint.arch, &checkpoint.optimizer.ema, dataset)
}

struct Sinks {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    dir: PathBuf,
}

impl Sinks {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(metrics, "{METRICS_HEADER}")?;
        let mut timing = BufWriter::new(File::create(dir.join("timing.csv"))?);
        writeln!(timing, "step,seconds")?;
        Ok(Self { metrics, timing, dir: dir.to_path_buf() })
    }
}

fn label_counts(labels: impl Iterator<Item = usize>, classes: usize) -> Vec<u64> {
    let mut c = vec![0u64; classes];
    for l in labels {
        c[l] += 1;
    }
    c
}

fn check_data(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<Architecture> {
    let (h, w, c) = train
        .image_shape()
        .ok_or_else(|| config("training set is empty"))?;
    if test.image_shape().is_some_and(|s| s != (h, w, c)) {
        return Err(config("train and test images differ in shape"));
    }
    let classes = train.classes.max(test.classes);
    let arch = cfg.architecture_for(h, w, c, classes);
    arch.validate()?;
    Ok(arch)
}

/// Runs the configured number of steps. With `out`, writes `metrics.csv`,
/// `timing.csv`, `config.txt` and `checkpoint.bin` there.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = check_data(cfg, train_set, test_set)?;
    let split = make_ssl_split_with(train_set, cfg.labels, cfg.split, derive_seed(cfg.seed, STREAM_SPLIT, 0))?;
    let mut sinks = match out {
        Some(dir) => {
            let s = Sinks::open(dir)?;
            fs::write(dir.join("config.txt"), cfg.to_text())?;
            Some(s)
        }
        None => None,
    };

    let params = ModelParams::init(&arch, derive_seed(cfg.seed, STREAM_INIT, 0))?;
    let mut state = TrainState {
        config: cfg.clone(),
        optimizer: OptimizerState::new(cfg.optimizer(), &params),
        params,
        policy: AugmentPolicy::new(cfg.cta_rho, cfg.cta_threshold, cfg.cta_depth)?,
        guess: GuessState::new(arch.classes, cfg.guess_window)?,
        arch,
        step: 0,
    };
    let eval_set: Dataset = subset(test_set, cfg.eval_size);
    let mut stream = BatchStream::new(&split, cfg.batch, derive_seed(cfg.seed, STREAM_BATCHES, 0));
    let started = Instant::now();
    let mut metrics = Vec::new();
    let (mut acc, mut acc_n) = (LossBreakdown::default(), 0usize);

    for t in 0..cfg.steps {
        let (li, ui) = stream.next().expect("infinite stream");
        let step_seed = derive_seed(cfg.seed, STREAM_STEP, t as u64);
        let b = step(&mut state, train_set, &li, &ui, t, step_seed)?;
        acc.supervised += b.supervised;
        acc.unlabeled += b.unlabeled;
        acc.premix += b.premix;
        acc.rotation += b.rotation;
        acc_n += 1;
        state.step += 1;

        let done = t + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let n = acc_n as f64;
            let breakdown = LossBreakdown {
                supervised: acc.supervised / n,
                unlabeled: acc.unlabeled / n,
                premix: acc.premix / n,
                rotation: acc.rotation / n,
            };
            let row = measure(&state, &eval_set, done, breakdown)?;
            if let Some(s) = sinks.as_mut() {
                writeln!(s.metrics, "{}", row.to_csv())?;
                s.metrics.flush()?;
                writeln!(s.timing, "{done},{:.3}", started.elapsed().as_secs_f64())?;
                s.timing.flush()?;
            }
            metrics.push(row);
            acc = LossBreakdown::default();
            acc_n = 0;
        }
    }

    let final_error = evaluate_params(&state.arch, &state.optimizer.ema, test_set)?;
    if let Some(s) = sinks {
        state.checkpoint().save(&s.dir.join("checkpoint.bin"))?;
    }
    Ok(TrainOutcome { metrics, final_error, state })
}

fn subset(set: &Dataset, n: usize) -> Dataset {
    if n == 0 || n >= set.len() {
        return set.clone();
    }
    Dataset {
        images: set.images[..n].to_vec(),
        labels: set.labels[..n].to_vec(),
        classes: set.classes,
    }
}

fn measure(state: &TrainState, eval_set: &Dataset, step: usize, breakdown: LossBreakdown) -> Result<MetricsRow> {
    let preds = predict(&state.arch, &state.optimizer.ema, &eval_set.images)?;
    let test_error = error_rate(&preds, &eval_set.labels)?;
    let mi = if preds.is_empty() {
        crate::pipeline::MutualInfo { fairness: 0.0, confidence: 0.0, mutual_information: 0.0 }
    } else {
        mutual_info_decomposition(&preds)?
    };
    Ok(MetricsRow {
        step,
        loss: breakdown.total(),
        breakdown,
        test_error,
        kl: kl_divergence(&state.guess.p_tilde(), &state.guess.p_true())?,
        fairness: mi.fairness,
        confidence: mi.confidence,
        mutual_information: mi.mutual_information,
    })
}

/// One training step: policy update, batch assembly, loss, Adam, EMA and
/// guess-state update, in that order.
fn step(state: &mut TrainState, data: &Dataset, li: &[usize], ui: &[usize], t: usize, seed: u64) -> Result<LossBreakdown> {
    let cfg = state.config.clone();
    let classes = state.arch.classes;
    let labeled: Vec<Example> = li
        .iter()
        .map(|&i| (data.images[i].clone(), ProbVector::one_hot(classes, data.labels[i])))
        .collect();

    let (images, grad_class, grad_rotation, breakdown, mean_guess) = match cfg.mode {
        TrainMode::Supervised => {
            let weak = cfg.weak();
            let views: Vec<ImageTensor> = labeled
                .iter()
                .enumerate()
                .map(|(i, (img, _))| weak.apply(img, &mut stream_rng(seed, SUB_WEAK, i as u64)))
                .collect::<Result<_>>()?;
            let out = forward(&state.arch, &state.params, &views)?;
            let n = views.len() as f64;
            let mut supervised = 0.0;
            let mut grads = Vec::with_capacity(views.len());
            for ((_, target), p) in labeled.iter().zip(&out.class_probs) {
                supervised += cross_entropy(target, p)? / n;
                grads.push(cross_entropy_logit_grad(target, p, 1.0 / n));
            }
            let breakdown = LossBreakdown { supervised, ..Default::default() };
            (out, grads, Vec::new(), breakdown, None)
        }
        TrainMode::Remixmatch => {
            update_policy(state, &labeled, seed)?;
            // with every example labeled, the labeled images double as unlabeled ones
            let pool = if ui.is_empty() { li } else { ui };
            let unlabeled: Vec<ImageTensor> = pool.iter().map(|&i| data.images[i].clone()).collect();
            let live = ClassifierRef { arch: &state.arch, params: &state.params };
            let mut mixed = remixmatch_batch(&labeled, &unlabeled, &state.policy, &state.guess, &live, &cfg.batch_config(), seed)?;
            let weights = cfg.loss_weights_at(t);
            let (rot_images, turns) = if weights.rotation {
                let mut rng = stream_rng(seed, SUB_ROTATION, 0);
                let turns: Vec<u8> = (0..mixed.premix.len()).map(|_| rng.random_range(0..4u8)).collect();
                let sources: Vec<ImageTensor> = mixed.premix.iter().map(|e| e.0.clone()).collect();
                (rotation_batch_with_turns(&sources, &turns)?, turns)
            } else {
                (Vec::new(), Vec::new())
            };
            if !weights.premix {
                mixed.premix.clear();
            }
            let (out, grads_c, grads_r, breakdown) = remixmatch_loss(state, &mixed, &rot_images, &turns, &weights)?;
            (out, grads_c, grads_r, breakdown, mixed.mean_weak_prediction())
        }
    };

    let grads = backward(&state.arch, &state.params, &images.cache, &grad_class, &grad_rotation)?;
    adam_step(&mut state.params, &grads, &mut state.optimizer)?;
    ema_update(&mut state.optimizer, &state.params)?;
    let counts = label_counts(li.iter().map(|&i| data.labels[i]), classes);
    match mean_guess {
        Some(mean) => state.guess.update(&mean, &counts)?,
        None => state.guess.update(&ProbVector::uniform(classes), &counts)?,
    }
    Ok(breakdown)
}

type LossParts = (crate::model::ForwardOutput, Vec<Vec<f64>>, Vec<Vec<f64>>, LossBreakdown);

fn remixmatch_loss(
    state: &TrainState,
    mixed: &MixedBatch,
    rot_images: &[ImageTensor],
    turns: &[u8],
    weights: &crate::pipeline::LossWeights,
) -> Result<LossParts> {
    let (nl, nu, np, nr) = (mixed.labeled.len(), mixed.unlabeled.len(), mixed.premix.len(), rot_images.len());
    let mut images: Vec<ImageTensor> = Vec::with_capacity(nl + nu + np + nr);
    images.extend(mixed.labeled.iter().map(|e| e.0.clone()));
    images.extend(mixed.unlabeled.iter().map(|e| e.0.clone()));
    images.extend(mixed.premix.iter().map(|e| e.0.clone()));
    images.extend(rot_images.iter().cloned());
    let out = forward(&state.arch, &state.params, &images)?;
    let probs = &out.class_probs;
    let outputs = GroupOutputs {
        labeled: probs[..nl].to_vec(),
        unlabeled: probs[nl..nl + nu].to_vec(),
        premix: probs[nl + nu..nl + nu + np].to_vec(),
        rotation: out.rotation_probs[nl + nu + np..].to_vec(),
    };
    let (_, breakdown) = total_loss(mixed, turns, &outputs, weights)?;
    let g = loss_gradients(mixed, turns, &outputs, weights)?;
    let classes = state.arch.classes;
    let mut grad_class = Vec::with_capacity(images.len());
    grad_class.extend(g.labeled);
    grad_class.extend(g.unlabeled);
    grad_class.extend(g.premix);
    grad_class.extend(std::iter::repeat_n(vec![0.0; classes], nr));
    let grad_rotation = if nr == 0 {
        Vec::new()
    } else {
        let mut r = vec![vec![0.0; crate::model::ROTATION_CLASSES]; nl + nu + np];
        r.extend(g.rotation);
        r
    };
    Ok((out, grad_class, grad_rotation, breakdown))
}

/// Scores one labeled example under a uniformly sampled augmentation with
/// the live model and feeds the agreement back into the policy.
fn update_policy(state: &mut TrainState, labeled: &[Example], seed: u64) -> Result<()> {
    let mut rng = stream_rng(seed, SUB_CTA, 0);
    let (img, target) = &labeled[rng.random_range(0..labeled.len())];
    let aug = state.policy.sample_for_update(&mut rng);
    let probe = aug.apply(img, &mut rng);
    let pred = predict(&state.arch, &state.params, std::slice::from_ref(&probe))?;
    let omega = match_score(&pred[0], target)?;
    state.policy.update_weights(&aug.handles, omega)
}
