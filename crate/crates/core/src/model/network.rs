use rayon::prelude::*;

use super::{Architecture, ModelParams, ROTATION_CLASSES};
use crate::error::{contract, Result};
use crate::imaging::ImageTensor;
use crate::pipeline::{Predictor, ProbVector};

/// Examples per unit of parallel work. Gradients are summed chunk by chunk in
/// index order, so results do not depend on the number of worker threads.
const CHUNK: usize = 8;

struct StageCache {
    /// Post-ReLU convolution output, `[c, h, w]`.
    activation: Vec<f64>,
    /// Flat index into `activation` of each pooled maximum.
    argmax: Vec<u32>,
    /// Pooled output, `[c, h / 2, w / 2]`.
    pooled: Vec<f64>,
}

struct ExampleCache {
    /// Input converted to `[c, h, w]`.
    input: Vec<f64>,
    stages: Vec<StageCache>,
    hidden: Vec<f64>,
}

/// Activations retained by [`forward`] for the matching [`backward`].
pub struct ForwardCache {
    examples: Vec<ExampleCache>,
    version: u64,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

pub struct ForwardOutput {
    pub class_logits: Vec<Vec<f64>>,
    pub rotation_logits: Vec<Vec<f64>>,
    pub class_probs: Vec<ProbVector>,
    pub rotation_probs: Vec<ProbVector>,
    pub cache: ForwardCache,
}

/// One gradient buffer per parameter tensor, in storage order.
pub type Gradients = Vec<Vec<f64>>;

fn to_chw(image: &ImageTensor) -> Vec<f64> {
    let (h, w, c) = image.shape();
    let mut out = vec![0.0; h * w * c];
    for (i, px) in image.data().chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            out[ch * h * w + i] = v as f64;
        }
    }
    out
}

/// Column range `x` such that `x + d` stays inside `0..n`.
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

fn conv3x3(input: &[f64], c_in: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let plane = h * w;
    for (o, out_o) in out.chunks_exact_mut(plane).enumerate() {
        out_o.fill(bias[o]);
        for c in 0..c_in {
            let in_c = &input[c * plane..(c + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = valid_range(w, dx);
                    let wv = weight[((o * c_in + c) * 3 + ky) * 3 + kx];
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w;
                        let dst = &mut out_o[y * w + x0..y * w + x1];
                        let s = &in_c[(src as isize + x0 as isize + dx) as usize..(src as isize + x1 as isize + dx) as usize];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_in: Option<&mut [f64]>,
) {
    let plane = h * w;
    for (o, g_o) in grad_out.chunks_exact(plane).enumerate() {
        grad_b[o] += g_o.iter().sum::<f64>();
        for c in 0..c_in {
            let in_c = &input[c * plane..(c + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = valid_range(w, dx);
                    let wi = ((o * c_in + c) * 3 + ky) * 3 + kx;
                    let wv = weight[wi];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src = (((y as isize + dy) as usize) * w) as isize;
                        let lo = (src + x0 as isize + dx) as usize;
                        let hi = (src + x1 as isize + dx) as usize;
                        let g = &g_o[y * w + x0..y * w + x1];
                        for (gv, &v) in g.iter().zip(&in_c[lo..hi]) {
                            acc += gv * v;
                        }
                        if let Some(gi) = grad_in.as_deref_mut() {
                            let gi_c = &mut gi[c * plane + lo..c * plane + hi];
                            for (d, &gv) in gi_c.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    grad_w[wi] += acc;
                }
            }
        }
    }
}

fn max_pool(act: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut pooled = Vec::with_capacity(c * ph * pw);
    let mut argmax = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        let base = ch * h * w;
        for py in 0..ph {
            for px in 0..pw {
                let mut best = base + 2 * py * w + 2 * px;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * py + dy) * w + 2 * px + dx;
                    if act[i] > act[best] {
                        best = i;
                    }
                }
                pooled.push(act[best]);
                argmax.push(best as u32);
            }
        }
    }
    (pooled, argmax)
}

fn dense(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    bias.iter()
        .zip(weight.chunks_exact(x.len()))
        .map(|(b, row)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

struct Layout {
    stages: usize,
}

impl Layout {
    fn conv(&self, i: usize) -> (usize, usize) {
        (2 * i, 2 * i + 1)
    }
    fn fc(&self) -> (usize, usize) {
        (2 * self.stages, 2 * self.stages + 1)
    }
    fn class(&self) -> (usize, usize) {
        (2 * self.stages + 2, 2 * self.stages + 3)
    }
    fn rotation(&self) -> (usize, usize) {
        (2 * self.stages + 4, 2 * self.stages + 5)
    }
}

fn forward_one(arch: &Architecture, params: &ModelParams, image: &ImageTensor) -> (ExampleCache, Vec<f64>, Vec<f64>) {
    let lay = Layout { stages: arch.conv_channels.len() };
    let t = &params.tensors;
    let input = to_chw(image);
    let (mut h, mut w, mut c_in) = (arch.height, arch.width, arch.channels);
    let mut stages = Vec::with_capacity(lay.stages);
    for (i, &c_out) in arch.conv_channels.iter().enumerate() {
        let (wi, bi) = lay.conv(i);
        let prev = stages.last().map_or(&input, |s: &StageCache| &s.pooled);
        let mut act = vec![0.0; c_out * h * w];
        conv3x3(prev, c_in, h, w, &t[wi].data, &t[bi].data, &mut act);
        for v in &mut act {
            *v = v.max(0.0);
        }
        let (pooled, argmax) = max_pool(&act, c_out, h, w);
        stages.push(StageCache { activation: act, argmax, pooled });
        h /= 2;
        w /= 2;
        c_in = c_out;
    }
    let flat = stages.last().map_or(&input, |s| &s.pooled);
    let (fw, fb) = lay.fc();
    let mut hidden = dense(flat, &t[fw].data, &t[fb].data);
    for v in &mut hidden {
        *v = v.max(0.0);
    }
    let (cw, cb) = lay.class();
    let (rw, rb) = lay.rotation();
    let class_logits = dense(&hidden, &t[cw].data, &t[cb].data);
    let rotation_logits = dense(&hidden, &t[rw].data, &t[rb].data);
    (ExampleCache { input, stages, hidden }, class_logits, rotation_logits)
}

fn check_images(arch: &Architecture, images: &[ImageTensor]) -> Result<()> {
    for img in images {
        if img.shape() != (arch.height, arch.width, arch.channels) {
            return Err(contract(format!(
                "image shape {:?} does not match model input {:?}",
                img.shape(),
                (arch.height, arch.width, arch.channels)
            )));
        }
    }
    Ok(())
}

/// Runs both heads on a batch, keeping the activations needed by [`backward`].
pub fn forward(arch: &Architecture, params: &ModelParams, images: &[ImageTensor]) -> Result<ForwardOutput> {
    check_images(arch, images)?;
    let results: Vec<(ExampleCache, Vec<f64>, Vec<f64>)> = images
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| chunk.iter().map(|img| forward_one(arch, params, img)).collect::<Vec<_>>())
        .collect();
    let mut examples = Vec::with_capacity(results.len());
    let mut class_logits = Vec::with_capacity(results.len());
    let mut rotation_logits = Vec::with_capacity(results.len());
    for (cache, cl, rl) in results {
        examples.push(cache);
        class_logits.push(cl);
        rotation_logits.push(rl);
    }
    let class_probs = class_logits.iter().map(|z| ProbVector::softmax(z)).collect();
    let rotation_probs = rotation_logits.iter().map(|z| ProbVector::softmax(z)).collect();
    Ok(ForwardOutput {
        class_logits,
        rotation_logits,
        class_probs,
        rotation_probs,
        cache: ForwardCache { examples, version: params.version() },
    })
}

fn zero_grads(params: &ModelParams) -> Gradients {
    params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
}

fn add_outer(grad_w: &mut [f64], grad_b: &mut [f64], upstream: &[f64], x: &[f64]) {
    for ((row, gb), &g) in grad_w.chunks_exact_mut(x.len()).zip(grad_b.iter_mut()).zip(upstream) {
        if g == 0.0 {
            continue;
        }
        *gb += g;
        for (r, &v) in row.iter_mut().zip(x) {
            *r += g * v;
        }
    }
}

fn backprop_dense(grad_x: &mut [f64], weight: &[f64], upstream: &[f64]) {
    for (row, &g) in weight.chunks_exact(grad_x.len()).zip(upstream) {
        if g == 0.0 {
            continue;
        }
        for (gx, &w) in grad_x.iter_mut().zip(row) {
            *gx += g * w;
        }
    }
}

fn backward_one(
    arch: &Architecture,
    params: &ModelParams,
    ex: &ExampleCache,
    g_class: &[f64],
    g_rot: &[f64],
    grads: &mut Gradients,
) {
    let lay = Layout { stages: arch.conv_channels.len() };
    let t = &params.tensors;
    let (cw, cb) = lay.class();
    let (rw, rb) = lay.rotation();
    {
        let (lo, hi) = grads.split_at_mut(cb);
        add_outer(&mut lo[cw], &mut hi[0], g_class, &ex.hidden);
    }
    {
        let (lo, hi) = grads.split_at_mut(rb);
        add_outer(&mut lo[rw], &mut hi[0], g_rot, &ex.hidden);
    }
    let mut g_hidden = vec![0.0; ex.hidden.len()];
    backprop_dense(&mut g_hidden, &t[cw].data, g_class);
    backprop_dense(&mut g_hidden, &t[rw].data, g_rot);
    for (g, &h) in g_hidden.iter_mut().zip(&ex.hidden) {
        if h <= 0.0 {
            *g = 0.0;
        }
    }
    if g_hidden.iter().all(|&g| g == 0.0) {
        return;
    }

    let flat = ex.stages.last().map_or(&ex.input, |s| &s.pooled);
    let (fw, fb) = lay.fc();
    {
        let (lo, hi) = grads.split_at_mut(fb);
        add_outer(&mut lo[fw], &mut hi[0], &g_hidden, flat);
    }
    let mut g_flat = vec![0.0; flat.len()];
    backprop_dense(&mut g_flat, &t[fw].data, &g_hidden);

    let mut g_pooled = g_flat;
    for i in (0..lay.stages).rev() {
        let st = &ex.stages[i];
        let c_out = arch.conv_channels[i];
        let c_in = if i == 0 { arch.channels } else { arch.conv_channels[i - 1] };
        let h = arch.height >> i;
        let w = arch.width >> i;
        let mut g_act = vec![0.0; c_out * h * w];
        for (&idx, &g) in st.argmax.iter().zip(&g_pooled) {
            // Pooled maxima of ReLU outputs; zero means the unit was inactive.
            if st.activation[idx as usize] > 0.0 {
                g_act[idx as usize] += g;
            }
        }
        let input = if i == 0 { &ex.input } else { &ex.stages[i - 1].pooled };
        let (wi, bi) = lay.conv(i);
        let mut g_in = if i > 0 { Some(vec![0.0; c_in * h * w]) } else { None };
        let (lo, hi) = grads.split_at_mut(bi);
        conv3x3_backward(input, c_in, h, w, &t[wi].data, &g_act, &mut lo[wi], &mut hi[0], g_in.as_deref_mut());
        if let Some(g) = g_in {
            g_pooled = g;
        }
    }
}

/// Reverse-mode gradients of a loss whose gradients with respect to the two
/// heads' logits are `grad_class` and `grad_rotation` (one row per example;
/// an empty slice means zero for that head).
pub fn backward(
    arch: &Architecture,
    params: &ModelParams,
    cache: &ForwardCache,
    grad_class: &[Vec<f64>],
    grad_rotation: &[Vec<f64>],
) -> Result<Gradients> {
    if cache.version != params.version() {
        return Err(contract("forward cache is stale: parameters changed since forward"));
    }
    let n = cache.examples.len();
    let zeros_c = vec![0.0; arch.classes];
    let zeros_r = vec![0.0; ROTATION_CLASSES];
    for (name, g, width) in [("class", grad_class, arch.classes), ("rotation", grad_rotation, ROTATION_CLASSES)] {
        if !g.is_empty() && (g.len() != n || g.iter().any(|r| r.len() != width)) {
            return Err(contract(format!("{name} gradient rows do not match the cached batch")));
        }
    }
    let partials: Vec<Gradients> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut g = zero_grads(params);
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                let gc = if grad_class.is_empty() { &zeros_c } else { &grad_class[i] };
                let gr = if grad_rotation.is_empty() { &zeros_r } else { &grad_rotation[i] };
                backward_one(arch, params, &cache.examples[i], gc, gr, &mut g);
            }
            g
        })
        .collect();
    let mut total = zero_grads(params);
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            for (a, b) in t.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    Ok(total)
}

/// Architecture plus parameters; predicts with the class head.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub arch: Architecture,
    pub params: ModelParams,
}

/// Class-head probabilities without keeping activations.
pub fn predict(arch: &Architecture, params: &ModelParams, images: &[ImageTensor]) -> Result<Vec<ProbVector>> {
    check_images(arch, images)?;
    Ok(images
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .map(|img| ProbVector::softmax(&forward_one(arch, params, img).1))
                .collect::<Vec<_>>()
        })
        .collect())
}

impl Predictor for Classifier {
    fn predict(&self, images: &[ImageTensor]) -> Result<Vec<ProbVector>> {
        predict(&self.arch, &self.params, images)
    }
}

/// Borrowed form of [`Classifier`].
#[derive(Clone, Copy, Debug)]
pub struct ClassifierRef<'a> {
    pub arch: &'a Architecture,
    pub params: &'a ModelParams,
}

impl Predictor for ClassifierRef<'_> {
    fn predict(&self, images: &[ImageTensor]) -> Result<Vec<ProbVector>> {
        predict(self.arch, self.params, images)
    }
}
