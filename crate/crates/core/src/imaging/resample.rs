use std::f64::consts::PI;

use super::{clamp_unit, reflect_index, ImageTensor};

/// Resampling filters selectable by the rescale transformation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleMethod {
    /// Lanczos-3 windowed sinc.
    Antialias,
    Bicubic,
    Bilinear,
    Box,
    /// Hamming-windowed sinc with unit support.
    Hamming,
    Nearest,
}

impl ResampleMethod {
    pub const ALL: [ResampleMethod; 6] = [
        ResampleMethod::Antialias,
        ResampleMethod::Bicubic,
        ResampleMethod::Bilinear,
        ResampleMethod::Box,
        ResampleMethod::Hamming,
        ResampleMethod::Nearest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResampleMethod::Antialias => "antialias",
            ResampleMethod::Bicubic => "bicubic",
            ResampleMethod::Bilinear => "bilinear",
            ResampleMethod::Box => "box",
            ResampleMethod::Hamming => "hamming",
            ResampleMethod::Nearest => "nearest",
        }
    }

    fn support(self) -> f64 {
        match self {
            ResampleMethod::Antialias => 3.0,
            ResampleMethod::Bicubic => 2.0,
            ResampleMethod::Bilinear | ResampleMethod::Hamming => 1.0,
            ResampleMethod::Box | ResampleMethod::Nearest => 0.5,
        }
    }

    fn kernel(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            ResampleMethod::Box | ResampleMethod::Nearest => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            ResampleMethod::Bilinear => (1.0 - ax).max(0.0),
            ResampleMethod::Bicubic => {
                const A: f64 = -0.5;
                if ax < 1.0 {
                    ((A + 2.0) * ax - (A + 3.0)) * ax * ax + 1.0
                } else if ax < 2.0 {
                    (((ax - 5.0) * ax + 8.0) * ax - 4.0) * A
                } else {
                    0.0
                }
            }
            ResampleMethod::Hamming => {
                if ax >= 1.0 {
                    0.0
                } else {
                    sinc(x) * (0.54 + 0.46 * (PI * x).cos())
                }
            }
            ResampleMethod::Antialias => {
                if ax >= 3.0 {
                    0.0
                } else {
                    sinc(x) * sinc(x / 3.0)
                }
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Bilinear sample at a continuous source position, with reflection padding.
#[inline]
pub(crate) fn bilinear(image: &ImageTensor, sy: f32, sx: f32, out: &mut [f32]) {
    let (h, w, c) = image.shape();
    let y0 = sy.floor();
    let x0 = sx.floor();
    let fy = sy - y0;
    let fx = sx - x0;
    let (y0, x0) = (y0 as i64, x0 as i64);
    let ya = reflect_index(y0, h);
    let yb = reflect_index(y0 + 1, h);
    let xa = reflect_index(x0, w);
    let xb = reflect_index(x0 + 1, w);
    let data = image.data();
    for (ch, o) in out.iter_mut().enumerate().take(c) {
        let p = |y: usize, x: usize| data[(y * w + x) * c + ch];
        let top = p(ya, xa) * (1.0 - fx) + if fx > 0.0 { p(ya, xb) * fx } else { 0.0 };
        let bottom = if fy > 0.0 {
            p(yb, xa) * (1.0 - fx) + if fx > 0.0 { p(yb, xb) * fx } else { 0.0 }
        } else {
            0.0
        };
        *o = clamp_unit(top * (1.0 - fy) + bottom * fy);
    }
}

/// Inverse-mapped warp: `map(y, x)` returns the source `(sy, sx)` for each
/// output pixel.
pub(crate) fn warp(image: &ImageTensor, map: impl Fn(f32, f32) -> (f32, f32)) -> ImageTensor {
    let (h, w, c) = image.shape();
    let mut data = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map(y as f32, x as f32);
            let o = (y * w + x) * c;
            bilinear(image, sy, sx, &mut data[o..o + c]);
        }
    }
    image.with_data(data)
}

/// Per-output-coordinate filter taps along one axis.
struct Taps {
    start: Vec<i64>,
    weights: Vec<Vec<f64>>,
}

fn axis_taps(out_len: usize, crop_start: f64, crop_len: f64, method: ResampleMethod) -> Taps {
    let scale = crop_len / out_len as f64;
    // Widen the kernel when shrinking so every filter also anti-aliases.
    let stretch = scale.max(1.0);
    let support = method.support() * stretch;
    let mut start = Vec::with_capacity(out_len);
    let mut weights = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = crop_start + (i as f64 + 0.5) * scale - 0.5;
        if method == ResampleMethod::Nearest {
            let j = center.round() as i64;
            start.push(j);
            weights.push(vec![1.0]);
            continue;
        }
        let lo = (center - support).ceil() as i64;
        let hi = (center + support).floor() as i64;
        let mut ws: Vec<f64> = (lo..=hi)
            .map(|j| method.kernel((j as f64 - center) / stretch))
            .collect();
        let total: f64 = ws.iter().sum();
        if total.abs() > 1e-12 {
            for wgt in &mut ws {
                *wgt /= total;
            }
        } else {
            ws.iter_mut().for_each(|w| *w = 0.0);
            let last = ws.len() as i64 - 1;
            ws[((center.round() as i64) - lo).clamp(0, last) as usize] = 1.0;
        }
        start.push(lo);
        weights.push(ws);
    }
    Taps { start, weights }
}

/// Center crop of side `fraction * size` resized back to the full size.
pub(crate) fn rescale_center(image: &ImageTensor, fraction: f32, method: ResampleMethod) -> ImageTensor {
    let (h, w, c) = image.shape();
    let crop_h = h as f64 * fraction as f64;
    let crop_w = w as f64 * fraction as f64;
    let ty = axis_taps(h, (h as f64 - crop_h) / 2.0, crop_h, method);
    let tx = axis_taps(w, (w as f64 - crop_w) / 2.0, crop_w, method);
    let src = image.data();

    // Horizontal pass into f64 scratch, then vertical pass.
    let mut rows = vec![0.0f64; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for (k, &wgt) in tx.weights[x].iter().enumerate() {
                if wgt == 0.0 {
                    continue;
                }
                let sx = reflect_index(tx.start[x] + k as i64, w);
                for ch in 0..c {
                    rows[(y * w + x) * c + ch] += wgt * src[(y * w + sx) * c + ch] as f64;
                }
            }
        }
    }
    let mut out = vec![0.0f32; h * w * c];
    for y in 0..h {
        for (k, &wgt) in ty.weights[y].iter().enumerate() {
            if wgt == 0.0 {
                continue;
            }
            let sy = reflect_index(ty.start[y] + k as i64, h);
            for x in 0..w {
                for ch in 0..c {
                    out[(y * w + x) * c + ch] += (wgt * rows[(sy * w + x) * c + ch]) as f32;
                }
            }
        }
    }
    for v in &mut out {
        *v = clamp_unit(*v);
    }
    image.with_data(out)
}
