//! Float images and the pixel transformations used for weak and strong
//! augmentation.
//!
//! Images are row-major, channel-last, with intensities in `[0, 1]`. Every
//! transformation is size-preserving and clamps its output back into range.

mod ops;
mod resample;
mod spec;

pub use ops::apply_transform;
pub use resample::ResampleMethod;
pub use spec::{
    bin_to_magnitude, Magnitude, ParamRange, ParamValue, TransformKind, TransformSpec,
    MAGNITUDE_BINS, RESCALE_METHOD_BINS,
};

use rand::Rng;

use crate::error::{contract, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    /// Builds an image from row-major, channel-last data. Values are clamped
    /// into `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(contract("image dimensions must be nonzero"));
        }
        if channels != 1 && channels != 3 {
            return Err(contract(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(contract(format!(
                "expected {} values for a {height}x{width}x{channels} image, got {}",
                height * width * channels,
                data.len()
            )));
        }
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Same shape as `self`, with `data` already known to be in range.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * self.channels + c] = clamp_unit(value);
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f32 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Horizontal mirror.
    pub fn mirror(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        let c = self.channels;
        for y in 0..self.height {
            for x in 0..self.width {
                let src = (y * self.width + (self.width - 1 - x)) * c;
                let dst = (y * self.width + x) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        self.with_data(out)
    }

    /// Integer translation with reflection padding. Positive `dx` moves the
    /// content right, positive `dy` moves it down.
    pub fn shift(&self, dx: i64, dy: i64) -> Self {
        let c = self.channels;
        let mut out = vec![0.0; self.data.len()];
        for y in 0..self.height {
            let sy = reflect_index(y as i64 - dy, self.height);
            for x in 0..self.width {
                let sx = reflect_index(x as i64 - dx, self.width);
                let src = (sy * self.width + sx) * c;
                let dst = (y * self.width + x) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        self.with_data(out)
    }

    /// Point-wise convex combination `t * self + (1 - t) * other`.
    pub fn lerp(&self, other: &ImageTensor, t: f32) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(contract(format!(
                "cannot blend {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| clamp_unit(t * a + (1.0 - t) * b))
            .collect();
        Ok(self.with_data(data))
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Reflects an integer coordinate into `[0, n)` without repeating the edge
/// (`-1 -> 1`, `n -> n - 2`).
pub(crate) fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

/// Flip-and-shift augmentation: a horizontal mirror with probability 0.5 when
/// `flip_enabled`, followed by an integer translation drawn uniformly from
/// `-floor(f * width)..=floor(f * width)` horizontally (and the same with the
/// height vertically), with reflection padding.
pub fn weak_augment<R: Rng + ?Sized>(
    image: &ImageTensor,
    flip_enabled: bool,
    max_shift_fraction: f32,
    rng: &mut R,
) -> Result<ImageTensor> {
    if !(0.0..=0.5).contains(&max_shift_fraction) {
        return Err(contract(format!(
            "max_shift_fraction {max_shift_fraction} outside [0, 0.5]"
        )));
    }
    let mut out = if flip_enabled && rng.random_bool(0.5) {
        image.mirror()
    } else {
        image.clone()
    };
    let max_dx = (max_shift_fraction * image.width as f32).floor() as i64;
    let max_dy = (max_shift_fraction * image.height as f32).floor() as i64;
    if max_dx > 0 || max_dy > 0 {
        let dx = rng.random_range(-max_dx..=max_dx);
        let dy = rng.random_range(-max_dy..=max_dy);
        out = out.shift(dx, dy);
    }
    Ok(out)
}

/// Lossless counter-clockwise rotation by `quarter_turns * 90` degrees.
///
/// One quarter turn maps the pixel at `(r, c)` to `(n - 1 - c, r)`, so the
/// 2x2 pattern `[[a, b], [c, d]]` becomes `[[b, d], [a, c]]`.
pub fn rotate90(image: &ImageTensor, quarter_turns: u8) -> Result<ImageTensor> {
    if image.height != image.width {
        return Err(contract(format!(
            "rotate90 needs a square image, got {}x{}",
            image.height, image.width
        )));
    }
    if quarter_turns > 3 {
        return Err(contract(format!("quarter_turns {quarter_turns} not in 0..=3")));
    }
    let n = image.width;
    let c = image.channels;
    let mut out = vec![0.0; image.data.len()];
    for r in 0..n {
        for col in 0..n {
            let (sr, sc) = match quarter_turns {
                0 => (r, col),
                1 => (col, n - 1 - r),
                2 => (n - 1 - r, n - 1 - col),
                _ => (n - 1 - col, r),
            };
            let src = (sr * n + sc) * c;
            let dst = (r * n + col) * c;
            out[dst..dst + c].copy_from_slice(&image.data[src..src + c]);
        }
    }
    Ok(image.with_data(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pattern(h: usize, w: usize, c: usize) -> ImageTensor {
        let data = (0..h * w * c).map(|i| (i as f32 * 0.37).sin() * 0.5 + 0.5).collect();
        ImageTensor::new(h, w, c, data).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageTensor::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn values_are_clamped_on_construction() {
        let img = ImageTensor::new(1, 2, 1, vec![-0.5, 3.0]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn reflect_index_mirrors_without_edge_repeat() {
        let got: Vec<usize> = (-3..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn weak_augment_identity_when_disabled() {
        let img = pattern(8, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(weak_augment(&img, false, 0.0, &mut rng).unwrap(), img);
        }
    }

    #[test]
    fn weak_augment_rejects_large_shift() {
        let img = pattern(4, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(weak_augment(&img, true, 0.6, &mut rng).is_err());
    }

    #[test]
    fn mirror_is_an_involution() {
        let img = pattern(5, 7, 3);
        assert_eq!(img.mirror().mirror(), img);
        assert_ne!(img.mirror(), img);
    }

    #[test]
    fn weak_shift_range_on_32px_is_four_pixels() {
        // A one-hot column marker reveals the horizontal displacement.
        let mut img = ImageTensor::filled(32, 32, 1, 0.0).unwrap();
        for y in 0..32 {
            img.set(y, 16, 0, 1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            let out = weak_augment(&img, false, 0.125, &mut rng).unwrap();
            let col = (0..32).find(|&x| out.get(0, x, 0) == 1.0).unwrap() as i64;
            seen.insert(col - 16);
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), (-4..=4).collect::<Vec<_>>());
    }

    #[test]
    fn rotate90_two_by_two() {
        let img = ImageTensor::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(rotate90(&img, 0).unwrap(), img);
        assert_eq!(rotate90(&img, 1).unwrap().data(), &[0.2, 0.4, 0.1, 0.3]);
        assert_eq!(rotate90(&img, 2).unwrap().data(), &[0.4, 0.3, 0.2, 0.1]);
        assert_eq!(rotate90(&img, 3).unwrap().data(), &[0.3, 0.1, 0.4, 0.2]);
    }

    #[test]
    fn rotate90_full_turns() {
        let img = pattern(6, 6, 3);
        let once = rotate90(&img, 1).unwrap();
        assert_eq!(rotate90(&once, 3).unwrap(), img);
        let mut x = img.clone();
        for _ in 0..4 {
            x = rotate90(&x, 1).unwrap();
        }
        assert_eq!(x, img);
    }

    #[test]
    fn rotate90_rejects_non_square() {
        assert!(rotate90(&pattern(2, 3, 1), 1).is_err());
    }
}
