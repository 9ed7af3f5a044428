use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::ctaugment::{DEFAULT_DEPTH, DEFAULT_RHO, DEFAULT_THRESHOLD};
use crate::data::SplitMode;
use crate::error::{config, Error, Result};
use crate::model::{Architecture, OptimizerConfig};
use crate::pipeline::{BatchConfig, LossWeights, WeakAugment, DEFAULT_WINDOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Remixmatch,
    /// Cross-entropy on weakly augmented labeled data only.
    Supervised,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakMode {
    FlipShift,
    ShiftOnly,
}

/// Every training setting. Text form is one `key = value` per line; see
/// [`TrainConfig::keys`] for the names.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// `synth`, or a directory holding IDX or CIFAR binary files.
    pub data: String,
    pub synth_train: usize,
    pub synth_test: usize,
    pub classes: usize,
    pub image_size: usize,
    pub channels: usize,
    /// Ratio between the most and least frequent synthetic class; 1 is balanced.
    pub class_skew: f64,
    pub data_seed: u64,
    pub split: SplitMode,
    pub labels: usize,
    pub batch: usize,
    pub steps: usize,
    pub k: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub mixup_max_rule: bool,
    pub lambda_u: f64,
    pub lambda_u1: f64,
    pub lambda_r: f64,
    /// Steps over which the two unlabeled weights ramp linearly from zero;
    /// 0 disables the ramp.
    pub warmup_steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub decoupled_decay: bool,
    pub ema: f64,
    pub cta_rho: f64,
    pub cta_threshold: f64,
    pub cta_depth: usize,
    pub guess_window: usize,
    pub weak_augment: WeakMode,
    pub weak_shift: f32,
    pub no_rotation: bool,
    pub no_premixup: bool,
    pub no_align: bool,
    pub l2_unlabeled: bool,
    pub no_strong_aug: bool,
    pub no_weak_aug: bool,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub eval_every: usize,
    /// Test examples used for metrics; 0 means all.
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let loss = LossWeights::default();
        let batch = BatchConfig::default();
        Self {
            mode: TrainMode::Remixmatch,
            data: "synth".into(),
            synth_train: 5000,
            synth_test: 1000,
            classes: 10,
            image_size: 32,
            channels: 3,
            class_skew: 1.0,
            data_seed: 0,
            split: SplitMode::Stratified,
            labels: 40,
            batch: 32,
            steps: 20_000,
            k: batch.k,
            temperature: batch.temperature,
            alpha: batch.alpha,
            mixup_max_rule: batch.mixup_max_rule,
            lambda_u: loss.lambda_u,
            lambda_u1: loss.lambda_u1,
            lambda_r: loss.lambda_r,
            warmup_steps: 1000,
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            adam_eps: opt.eps,
            weight_decay: opt.weight_decay,
            decoupled_decay: opt.decoupled_decay,
            ema: opt.ema_decay,
            cta_rho: DEFAULT_RHO,
            cta_threshold: DEFAULT_THRESHOLD,
            cta_depth: DEFAULT_DEPTH,
            guess_window: DEFAULT_WINDOW,
            weak_augment: WeakMode::FlipShift,
            weak_shift: batch.weak.max_shift,
            no_rotation: false,
            no_premixup: false,
            no_align: false,
            l2_unlabeled: false,
            no_strong_aug: false,
            no_weak_aug: false,
            conv_channels: vec![32, 64],
            hidden: 128,
            eval_every: 500,
            eval_size: 0,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl TrainConfig {
    pub fn keys() -> &'static [&'static str] {
        &[
            "mode", "data", "synth_train", "synth_test", "classes", "image_size", "channels",
            "class_skew", "data_seed", "split", "labels", "batch", "steps", "k", "temperature",
            "alpha", "mixup_max_rule", "lambda_u", "lambda_u1", "lambda_r", "warmup_steps", "lr", "beta1", "beta2",
            "adam_eps", "weight_decay", "decoupled_decay", "ema", "cta_rho", "cta_threshold",
            "cta_depth", "guess_window", "weak_augment", "weak_shift", "no_rotation", "no_premixup",
            "no_align", "l2_unlabeled", "no_strong_aug", "no_weak_aug", "conv_channels", "hidden",
            "eval_every", "eval_size", "seed",
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => {
                self.mode = match v {
                    "remixmatch" => TrainMode::Remixmatch,
                    "supervised" => TrainMode::Supervised,
                    _ => return Err(config(format!("unknown mode {v:?}"))),
                }
            }
            "data" => self.data = v.to_string(),
            "synth_train" => self.synth_train = parse(key, v)?,
            "synth_test" => self.synth_test = parse(key, v)?,
            "classes" => self.classes = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "class_skew" => self.class_skew = parse(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "split" => {
                self.split = match v {
                    "stratified" => SplitMode::Stratified,
                    "proportional" => SplitMode::Proportional,
                    _ => return Err(config(format!("unknown split {v:?}"))),
                }
            }
            "labels" => self.labels = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "mixup_max_rule" => self.mixup_max_rule = parse_bool(key, v)?,
            "lambda_u" => self.lambda_u = parse(key, v)?,
            "lambda_u1" => self.lambda_u1 = parse(key, v)?,
            "lambda_r" => self.lambda_r = parse(key, v)?,
            "warmup_steps" => self.warmup_steps = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "decoupled_decay" => self.decoupled_decay = parse_bool(key, v)?,
            "ema" => self.ema = parse(key, v)?,
            "cta_rho" => self.cta_rho = parse(key, v)?,
            "cta_threshold" => self.cta_threshold = parse(key, v)?,
            "cta_depth" => self.cta_depth = parse(key, v)?,
            "guess_window" => self.guess_window = parse(key, v)?,
            "weak_augment" => {
                self.weak_augment = match v {
                    "flip_shift" => WeakMode::FlipShift,
                    "shift_only" => WeakMode::ShiftOnly,
                    _ => return Err(config(format!("unknown weak_augment {v:?}"))),
                }
            }
            "weak_shift" => self.weak_shift = parse(key, v)?,
            "no_rotation" => self.no_rotation = parse_bool(key, v)?,
            "no_premixup" => self.no_premixup = parse_bool(key, v)?,
            "no_align" => self.no_align = parse_bool(key, v)?,
            "l2_unlabeled" => self.l2_unlabeled = parse_bool(key, v)?,
            "no_strong_aug" => self.no_strong_aug = parse_bool(key, v)?,
            "no_weak_aug" => self.no_weak_aug = parse_bool(key, v)?,
            "conv_channels" => {
                self.conv_channels = v
                    .split(',')
                    .map(|c| parse(key, c.trim()))
                    .collect::<Result<_>>()?
            }
            "hidden" => self.hidden = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "eval_size" => self.eval_size = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            other => return Err(config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    /// Parses config text on top of the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.apply_override(line)
                .map_err(|e| config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::keys() {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "mode" => match self.mode {
                TrainMode::Remixmatch => "remixmatch".into(),
                TrainMode::Supervised => "supervised".into(),
            },
            "data" => self.data.clone(),
            "synth_train" => self.synth_train.to_string(),
            "synth_test" => self.synth_test.to_string(),
            "classes" => self.classes.to_string(),
            "image_size" => self.image_size.to_string(),
            "channels" => self.channels.to_string(),
            "class_skew" => self.class_skew.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "split" => match self.split {
                SplitMode::Stratified => "stratified".into(),
                SplitMode::Proportional => "proportional".into(),
            },
            "labels" => self.labels.to_string(),
            "batch" => self.batch.to_string(),
            "steps" => self.steps.to_string(),
            "k" => self.k.to_string(),
            "temperature" => self.temperature.to_string(),
            "alpha" => self.alpha.to_string(),
            "mixup_max_rule" => self.mixup_max_rule.to_string(),
            "lambda_u" => self.lambda_u.to_string(),
            "lambda_u1" => self.lambda_u1.to_string(),
            "lambda_r" => self.lambda_r.to_string(),
            "warmup_steps" => self.warmup_steps.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "decoupled_decay" => self.decoupled_decay.to_string(),
            "ema" => self.ema.to_string(),
            "cta_rho" => self.cta_rho.to_string(),
            "cta_threshold" => self.cta_threshold.to_string(),
            "cta_depth" => self.cta_depth.to_string(),
            "guess_window" => self.guess_window.to_string(),
            "weak_augment" => match self.weak_augment {
                WeakMode::FlipShift => "flip_shift".into(),
                WeakMode::ShiftOnly => "shift_only".into(),
            },
            "weak_shift" => self.weak_shift.to_string(),
            "no_rotation" => self.no_rotation.to_string(),
            "no_premixup" => self.no_premixup.to_string(),
            "no_align" => self.no_align.to_string(),
            "l2_unlabeled" => self.l2_unlabeled.to_string(),
            "no_strong_aug" => self.no_strong_aug.to_string(),
            "no_weak_aug" => self.no_weak_aug.to_string(),
            "conv_channels" => self
                .conv_channels
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "hidden" => self.hidden.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_size" => self.eval_size.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        };
        Some(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("temperature", self.temperature),
            ("alpha", self.alpha),
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("class_skew", self.class_skew),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda_u", self.lambda_u), ("lambda_u1", self.lambda_u1), ("lambda_r", self.lambda_r), ("weight_decay", self.weight_decay)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("ema", self.ema)] {
            if !(0.0..1.0).contains(&v) {
                return Err(config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.batch == 0 || self.k == 0 || self.eval_every == 0 || self.guess_window == 0 {
            return Err(config("batch, k, eval_every and guess_window must be at least 1"));
        }
        if !(0.0..=0.5).contains(&self.weak_shift) {
            return Err(config("weak_shift must lie in [0, 0.5]"));
        }
        self.architecture_for(self.image_size, self.image_size, self.channels, self.classes)
            .validate()
    }

    pub fn architecture_for(&self, height: usize, width: usize, channels: usize, classes: usize) -> Architecture {
        Architecture {
            height,
            width,
            channels,
            conv_channels: self.conv_channels.clone(),
            hidden: self.hidden,
            classes,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
            decoupled_decay: self.decoupled_decay,
            ema_decay: self.ema,
        }
    }

    pub fn weak(&self) -> WeakAugment {
        WeakAugment {
            flip: self.weak_augment == WeakMode::FlipShift,
            max_shift: self.weak_shift,
        }
    }

    pub fn batch_config(&self) -> BatchConfig {
        BatchConfig {
            k: self.k,
            temperature: self.temperature,
            alpha: self.alpha,
            align: !self.no_align,
            mixup_max_rule: self.mixup_max_rule,
            weak: self.weak(),
            strong_enabled: !self.no_strong_aug,
            weak_enabled: !self.no_weak_aug,
        }
    }

    /// Loss weights at training step `step`.
    pub fn loss_weights_at(&self, step: usize) -> LossWeights {
        let ramp = if self.warmup_steps == 0 { 1.0 } else { (step as f64 / self.warmup_steps as f64).min(1.0) };
        LossWeights {
            lambda_u: self.lambda_u * ramp,
            lambda_u1: self.lambda_u1 * ramp,
            lambda_r: self.lambda_r,
            rotation: !self.no_rotation,
            premix: !self.no_premixup,
            l2_unlabeled: self.l2_unlabeled,
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
