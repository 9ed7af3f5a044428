use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{config, Result};
use crate::imaging::ImageTensor;
use crate::rng::{derive_seed, stream_rng};

const PROTOTYPE_SEED: u64 = 0x5eed_b10b;
const BLOBS: usize = 3;
const NOISE_SIGMA: f32 = 0.15;
const COLOR_JITTER: f32 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl SynthShape {
    pub fn square(side: usize, channels: usize) -> Self {
        Self { height: side, width: side, channels }
    }
}

struct Blob {
    cy: f32,
    cx: f32,
    sigma: f32,
    color: [f32; 3],
}

/// Class prototypes depend only on the class count and image shape, so
/// datasets drawn with different seeds share the same classes.
fn prototypes(classes: usize, shape: SynthShape) -> Vec<Vec<Blob>> {
    let key = derive_seed(PROTOTYPE_SEED, classes as u64, (shape.height * 131 + shape.width) as u64);
    let mut rng = stream_rng(key, shape.channels as u64, 0);
    let (h, w) = (shape.height as f32, shape.width as f32);
    (0..classes)
        .map(|_| {
            (0..BLOBS)
                .map(|_| Blob {
                    cy: rng.random_range(0.2..0.8) * h,
                    cx: rng.random_range(0.2..0.8) * w,
                    sigma: rng.random_range(0.06..0.16) * h.min(w),
                    color: [rng.random(), rng.random(), rng.random()],
                })
                .collect()
        })
        .collect()
}

fn render<R: Rng>(blobs: &[Blob], shape: SynthShape, rng: &mut R) -> ImageTensor {
    let SynthShape { height, width, channels } = shape;
    let jitter = 0.12 * height.min(width) as f32;
    let dy = rng.random_range(-jitter..=jitter);
    let dx = rng.random_range(-jitter..=jitter);
    let background = rng.random_range(0.0..0.25f32);
    let noise = Normal::new(0.0f32, NOISE_SIGMA).expect("valid sigma");
    let placed: Vec<(f32, f32, f32, f32, [f32; 3])> = blobs
        .iter()
        .map(|b| {
            let amp = rng.random_range(0.6..1.0f32);
            let s = b.sigma * rng.random_range(0.8..1.25f32);
            let cy = b.cy + dy + rng.random_range(-1.0..1.0f32);
            let cx = b.cx + dx + rng.random_range(-1.0..1.0f32);
            let mut color = b.color;
            for c in &mut color {
                *c = (*c + rng.random_range(-COLOR_JITTER..=COLOR_JITTER)).clamp(0.0, 1.0);
            }
            (cy, cx, s, amp, color)
        })
        .collect();
    let mut data = Vec::with_capacity(height * width * channels);
    for y in 0..height {
        for x in 0..width {
            let mut px = [background; 3];
            for &(cy, cx, s, amp, color) in &placed {
                let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                let g = amp * (-d2 / (2.0 * s * s)).exp();
                if channels == 1 {
                    px[0] += g * (0.4 + 0.6 * color[0]);
                } else {
                    for c in 0..3 {
                        px[c] += g * color[c];
                    }
                }
            }
            for v in px.iter().take(channels) {
                data.push(v + noise.sample(rng));
            }
        }
    }
    ImageTensor::new(height, width, channels, data).expect("shape checked by caller")
}

fn check_shape(shape: SynthShape) -> Result<()> {
    if shape.height < 4 || shape.width < 4 || !(shape.channels == 1 || shape.channels == 3) {
        return Err(config(format!("unsupported synthetic image shape {shape:?}")));
    }
    Ok(())
}

fn build(labels: Vec<usize>, classes: usize, shape: SynthShape, seed: u64) -> Result<Dataset> {
    check_shape(shape)?;
    let protos = prototypes(classes, shape);
    let images = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| render(&protos[l], shape, &mut stream_rng(seed, 0x5717, i as u64)))
        .collect();
    Dataset::new(images, labels, classes)
}

/// Balanced synthetic data: example `i` has label `i % classes`.
pub fn synth_dataset(n: usize, classes: usize, shape: SynthShape, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(config("synthetic data needs at least two classes"));
    }
    build((0..n).map(|i| i % classes).collect(), classes, shape, seed)
}

/// Synthetic data with class frequencies proportional to `weights`, rounded
/// by largest remainder so the counts sum to `n`.
pub fn synth_dataset_weighted(n: usize, weights: &[f64], shape: SynthShape, seed: u64) -> Result<Dataset> {
    if weights.len() < 2 || weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(config("class weights must be positive and at least two"));
    }
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    let mut labels = Vec::with_capacity(n);
    let mut remaining = counts;
    // interleave so prefixes stay representative
    while labels.len() < n {
        for (c, r) in remaining.iter_mut().enumerate() {
            if *r > 0 {
                labels.push(c);
                *r -= 1;
            }
        }
    }
    build(labels, weights.len(), shape, seed)
}
