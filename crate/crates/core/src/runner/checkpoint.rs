//! Single-file training snapshot.
//!
//! Layout, little-endian throughout: magic, format version, config text,
//! architecture, step, then four tensor groups (live weights, Adam first and
//! second moments, EMA weights), the Adam step, the augmentation policy and
//! the guess state. A tensor is its name, rank, dims and `f32` values.

use std::fs;
use std::path::Path;

use super::TrainConfig;
use crate::ctaugment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::imaging::TransformKind;
use crate::model::{Architecture, ModelParams, OptimizerState, Tensor};
use crate::pipeline::{GuessState, ProbVector};

const MAGIC: &[u8; 8] = b"RMXCKPT\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub arch: Architecture,
    pub step: u64,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub policy: AugmentPolicy,
    pub guess: GuessState,
}

fn data(ts: &[Tensor]) -> Vec<&[f64]> {
    ts.iter().map(|t| t.data.as_slice()).collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f32s(&mut self, vals: impl IntoIterator<Item = f64>) {
        for v in vals {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fn tensors(&mut self, prefix: &str, names: &[Tensor], data: &[&[f64]]) {
        self.u32(names.len());
        for (t, d) in names.iter().zip(data) {
            self.str(&format!("{prefix}{}", t.name));
            self.u32(t.shape.len());
            for &dim in &t.shape {
                self.u32(dim);
            }
            self.f32s(d.iter().copied());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            bad(format!("truncated at byte {} (need {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("string is not UTF-8"))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| bad("size overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    }
    fn tensors(&mut self, prefix: &str, expected: &[(String, Vec<usize>)]) -> Result<Vec<Tensor>> {
        let count = self.u32()?;
        if count != expected.len() {
            return Err(bad(format!("expected {} tensors, found {count}", expected.len())));
        }
        expected
            .iter()
            .map(|(name, shape)| {
                let found = self.str()?;
                if found != format!("{prefix}{name}") {
                    return Err(bad(format!("expected tensor {prefix}{name}, found {found}")));
                }
                let rank = self.u32()?;
                let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
                if &dims != shape {
                    return Err(bad(format!("tensor {found} has shape {dims:?}, expected {shape:?}")));
                }
                let data = self.f32s(dims.iter().product())?;
                Ok(Tensor { name: name.clone(), shape: dims, data })
            })
            .collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION as usize);
        w.str(&self.config.to_text());
        let a = &self.arch;
        for v in [a.height, a.width, a.channels, a.hidden, a.classes, a.conv_channels.len()] {
            w.u32(v);
        }
        for &c in &a.conv_channels {
            w.u32(c);
        }
        w.u64(self.step);
        let t = &self.params.tensors;
        w.tensors("", t, &data(t));
        let m: Vec<&[f64]> = self.optimizer.first_moment.iter().map(Vec::as_slice).collect();
        w.tensors("adam_m/", t, &m);
        let v: Vec<&[f64]> = self.optimizer.second_moment.iter().map(Vec::as_slice).collect();
        w.tensors("adam_v/", t, &v);
        w.tensors("ema/", &self.optimizer.ema.tensors, &data(&self.optimizer.ema.tensors));
        w.u64(self.optimizer.step);

        let tables: Vec<_> = self.policy.tables().collect();
        w.u32(tables.len());
        for (kind, param, weights) in tables {
            w.str(kind.name());
            w.u32(param);
            w.u32(weights.len());
            w.f32s(weights.iter().copied());
        }

        let g = &self.guess;
        w.u32(g.window());
        w.u32(g.classes());
        w.u32(g.buffer().len());
        for p in g.buffer() {
            w.f32s(p.as_slice().iter().copied());
        }
        for &c in g.label_counts() {
            w.u64(c);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION as usize {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let config = TrainConfig::parse_text(&r.str()?)?;
        let (height, width, channels, hidden, classes, stages) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        if stages > 16 {
            return Err(bad("implausible stage count"));
        }
        let conv_channels = (0..stages).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let arch = Architecture { height, width, channels, conv_channels, hidden, classes };
        arch.validate().map_err(|e| bad(format!("invalid architecture: {e}")))?;
        let step = r.u64()?;
        let shapes = arch.tensor_shapes();
        let params = ModelParams::from_tensors(&arch, r.tensors("", &shapes)?)?;
        let first: Vec<Vec<f64>> = r.tensors("adam_m/", &shapes)?.into_iter().map(|t| t.data).collect();
        let second: Vec<Vec<f64>> = r.tensors("adam_v/", &shapes)?.into_iter().map(|t| t.data).collect();
        let ema = ModelParams::from_tensors(&arch, r.tensors("ema/", &shapes)?)?;
        let adam_step = r.u64()?;
        let mut optimizer = OptimizerState::new(config.optimizer(), &ema);
        optimizer.first_moment = first;
        optimizer.second_moment = second;
        optimizer.step = adam_step;

        let mut policy = AugmentPolicy::new(config.cta_rho, config.cta_threshold, config.cta_depth)?;
        let tables = r.u32()?;
        for _ in 0..tables {
            let kind: TransformKind = r.str()?.parse().map_err(|e: Error| bad(e.to_string()))?;
            let param = r.u32()?;
            let n = r.u32()?;
            let weights: Vec<f64> = r.f32s(n)?.into_iter().map(|w| w.clamp(0.0, 1.0)).collect();
            policy.set_weights(kind, param, &weights).map_err(|e| bad(e.to_string()))?;
        }

        let window = r.u32()?;
        let g_classes = r.u32()?;
        let len = r.u32()?;
        if g_classes != classes || len > window {
            return Err(bad("guess state does not match the model"));
        }
        let buffer = (0..len)
            .map(|_| ProbVector::normalize(r.f32s(g_classes)?))
            .collect::<Result<Vec<_>>>()?;
        let counts = (0..g_classes).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let guess = GuessState::from_parts(window, buffer, counts)?;
        if r.at != bytes.len() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        Ok(Self { config, arch, step, params, optimizer, policy, guess })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
