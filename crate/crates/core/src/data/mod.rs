//! Datasets, labeled/unlabeled splits and batch streams.

mod batches;
mod cifar;
mod idx;
mod split;
mod synth;

pub use batches::BatchStream;
pub use cifar::{load_cifar_binary, parse_cifar_records, write_cifar_binary, CIFAR_RECORD};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, write_idx};
pub use split::{make_ssl_split, make_ssl_split_with, SplitMode, SslSplit};
pub use synth::{synth_dataset, synth_dataset_weighted, SynthShape};

use crate::error::{contract, Result};
use crate::imaging::ImageTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(contract(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(contract(format!("label {bad} out of range for {classes} classes")));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|im| im.shape() != first.shape()) {
                return Err(contract("images must share one shape"));
            }
        }
        Ok(Self { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(height, width, channels)` of the images, if any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(ImageTensor::shape)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Appends another dataset with the same image shape.
    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        if let (Some(a), Some(b)) = (self.image_shape(), other.image_shape()) {
            if a != b {
                return Err(contract("cannot concatenate datasets of different shapes"));
            }
        }
        self.classes = self.classes.max(other.classes);
        self.images.extend(other.images);
        self.labels.extend(other.labels);
        Ok(())
    }
}
