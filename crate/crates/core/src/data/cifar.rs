use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{LoadError, Result};
use crate::imaging::ImageTensor;

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
/// One label byte followed by the red, green and blue planes.
pub const CIFAR_RECORD: usize = 1 + 3 * PLANE;
const CLASSES: usize = 10;

/// Decodes concatenated CIFAR-10 binary records.
pub fn parse_cifar_records(bytes: &[u8], path: &Path) -> Result<(Vec<ImageTensor>, Vec<usize>), LoadError> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(LoadError::RecordSize { path: path.to_path_buf(), len: bytes.len(), record: CIFAR_RECORD });
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(rec[0] as usize);
        let planes = &rec[1..];
        let mut data = Vec::with_capacity(3 * PLANE);
        for i in 0..PLANE {
            for c in 0..3 {
                data.push(planes[c * PLANE + i] as f32 / 255.0);
            }
        }
        images.push(ImageTensor::new(SIDE, SIDE, 3, data).expect("fixed record size"));
    }
    Ok((images, labels))
}

/// Loads and concatenates CIFAR-10 binary batch files.
pub fn load_cifar_binary(paths: &[PathBuf]) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|source| LoadError::Io { path: path.clone(), source })?;
        let (i, l) = parse_cifar_records(&bytes, path)?;
        images.extend(i);
        labels.extend(l);
    }
    Dataset::new(images, labels, CLASSES)
}

pub fn write_cifar_binary(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.image_shape().is_some_and(|s| s != (SIDE, SIDE, 3)) {
        return Err(crate::error::contract("CIFAR records hold 32x32x3 images"));
    }
    let mut out = Vec::with_capacity(dataset.len() * CIFAR_RECORD);
    for (img, &label) in dataset.images.iter().zip(&dataset.labels) {
        out.push(label as u8);
        for c in 0..3 {
            out.extend(img.data().iter().skip(c).step_by(3).map(|&v| (v * 255.0).round() as u8));
        }
    }
    fs::write(path, out)?;
    Ok(())
}
