use std::path::{Path, PathBuf};

use super::TrainConfig;
use crate::data::{load_cifar_binary, load_idx, synth_dataset, synth_dataset_weighted, Dataset, SynthShape};
use crate::error::{config, Result};
use crate::rng::derive_seed;

const TEST_STREAM: u64 = 0x7e57;

/// Class weights falling geometrically from 1 to `1 / skew`.
pub fn skew_weights(classes: usize, skew: f64) -> Vec<f64> {
    let denom = (classes.max(2) - 1) as f64;
    (0..classes).map(|c| skew.powf(-(c as f64) / denom)).collect()
}

fn synth(cfg: &TrainConfig, n: usize, seed: u64) -> Result<Dataset> {
    let shape = SynthShape::square(cfg.image_size, cfg.channels);
    if cfg.class_skew == 1.0 {
        synth_dataset(n, cfg.classes, shape, seed)
    } else {
        synth_dataset_weighted(n, &skew_weights(cfg.classes, cfg.class_skew), shape, seed)
    }
}

fn existing(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

/// Resolves `cfg.data` into train and test sets. A directory is read as an
/// IDX pair set (`train-images-idx3-ubyte`, ...) or as CIFAR-10 binary
/// batches (`data_batch_*.bin`, `test_batch.bin`).
pub fn load_datasets(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    if cfg.data == "synth" {
        let train = synth(cfg, cfg.synth_train, cfg.data_seed)?;
        let test = synth(cfg, cfg.synth_test, derive_seed(cfg.data_seed, TEST_STREAM, 0))?;
        return Ok((train, test));
    }
    let dir = Path::new(&cfg.data);
    if !dir.is_dir() {
        return Err(config(format!("data path {} is neither `synth` nor a directory", dir.display())));
    }
    let idx = |stem: &str, kind: &str| existing(dir, &[&format!("{stem}-{kind}-idx3-ubyte"), &format!("{stem}-{kind}-idx1-ubyte"), &format!("{stem}-{kind}.idx3-ubyte"), &format!("{stem}-{kind}.idx1-ubyte")]);
    if let (Some(ti), Some(tl), Some(vi), Some(vl)) =
        (idx("train", "images"), idx("train", "labels"), idx("t10k", "images"), idx("t10k", "labels"))
    {
        let mut train = load_idx(&ti, &tl)?;
        let mut test = load_idx(&vi, &vl)?;
        let classes = train.classes.max(test.classes);
        train.classes = classes;
        test.classes = classes;
        return Ok((train, test));
    }
    let mut batches: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch_") && n.ends_with(".bin"))
        })
        .collect();
    batches.sort();
    let test = dir.join("test_batch.bin");
    if !batches.is_empty() && test.is_file() {
        return Ok((load_cifar_binary(&batches)?, load_cifar_binary(&[test])?));
    }
    Err(config(format!("no IDX or CIFAR-10 files found in {}", dir.display())))
}
