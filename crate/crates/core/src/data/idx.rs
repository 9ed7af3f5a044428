use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{LoadError, Result};
use crate::imaging::ImageTensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, LoadError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| LoadError::Truncated { path: path.to_path_buf(), needed: at + 4, found: bytes.len() })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), LoadError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(LoadError::BadMagic { path: path.to_path_buf(), expected, found });
    }
    Ok(())
}

/// Decodes an unsigned-byte IDX image file into `rows x cols x 1` images.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<ImageTensor>, LoadError> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let size = rows * cols;
    let needed = 16 + n * size;
    if bytes.len() < needed {
        return Err(LoadError::Truncated { path: path.to_path_buf(), needed, found: bytes.len() });
    }
    Ok(bytes[16..needed]
        .chunks_exact(size.max(1))
        .take(n)
        .map(|px| {
            let data = px.iter().map(|&b| b as f32 / 255.0).collect();
            ImageTensor::new(rows, cols, 1, data).expect("sized from header")
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>, LoadError> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(LoadError::Truncated { path: path.to_path_buf(), needed, found: bytes.len() });
    }
    Ok(bytes[8..needed].iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label file pair. Pixels are scaled to `[0, 1]` and the
/// class count is one more than the largest label.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let imgs = parse_idx_images(&read(images)?, images)?;
    let labs = parse_idx_labels(&read(labels)?, labels)?;
    if imgs.len() != labs.len() {
        return Err(LoadError::CountMismatch { images: imgs.len(), labels: labs.len() }.into());
    }
    let classes = labs.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::new(imgs, labs, classes)
}

/// Writes a single-channel dataset as an IDX pair, rounding to bytes.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let (rows, cols, channels) = dataset.image_shape().unwrap_or((0, 0, 1));
    if channels != 1 {
        return Err(crate::error::contract("IDX holds single-channel images"));
    }
    let mut img_bytes = Vec::with_capacity(16 + dataset.len() * rows * cols);
    for v in [IMAGE_MAGIC, dataset.len() as u32, rows as u32, cols as u32] {
        img_bytes.extend_from_slice(&v.to_be_bytes());
    }
    for im in &dataset.images {
        img_bytes.extend(im.data().iter().map(|&v| (v * 255.0).round() as u8));
    }
    let mut lab_bytes = Vec::with_capacity(8 + dataset.len());
    lab_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab_bytes.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    lab_bytes.extend(dataset.labels.iter().map(|&l| l as u8));
    fs::write(images, img_bytes)?;
    fs::write(labels, lab_bytes)?;
    Ok(())
}
