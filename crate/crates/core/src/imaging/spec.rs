use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::resample::ResampleMethod;
use crate::error::{contract, Error, Result};

/// Bins per continuous magnitude parameter.
pub const MAGNITUDE_BINS: usize = 17;
/// Bins for the resampling-method parameter of [`TransformKind::Rescale`].
pub const RESCALE_METHOD_BINS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransformKind {
    Autocontrast,
    Blur,
    Brightness,
    Color,
    Contrast,
    Cutout,
    Equalize,
    Invert,
    Identity,
    Posterize,
    Rescale,
    Rotate,
    Sharpness,
    ShearX,
    ShearY,
    Smooth,
    Solarize,
    TranslateX,
    TranslateY,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamRange {
    /// Continuous parameter over `[lo, hi]`, split into [`MAGNITUDE_BINS`] bins.
    Linear { name: &'static str, lo: f32, hi: f32 },
    /// Categorical choice of resampling filter.
    Method,
}

impl ParamRange {
    pub fn bins(&self) -> usize {
        match self {
            ParamRange::Linear { .. } => MAGNITUDE_BINS,
            ParamRange::Method => RESCALE_METHOD_BINS,
        }
    }
}

const fn lin(name: &'static str, lo: f32, hi: f32) -> ParamRange {
    ParamRange::Linear { name, lo, hi }
}

impl TransformKind {
    pub const ALL: [TransformKind; 19] = [
        TransformKind::Autocontrast,
        TransformKind::Blur,
        TransformKind::Brightness,
        TransformKind::Color,
        TransformKind::Contrast,
        TransformKind::Cutout,
        TransformKind::Equalize,
        TransformKind::Invert,
        TransformKind::Identity,
        TransformKind::Posterize,
        TransformKind::Rescale,
        TransformKind::Rotate,
        TransformKind::Sharpness,
        TransformKind::ShearX,
        TransformKind::ShearY,
        TransformKind::Smooth,
        TransformKind::Solarize,
        TransformKind::TranslateX,
        TransformKind::TranslateY,
    ];

    pub fn params(self) -> &'static [ParamRange] {
        use TransformKind::*;
        const UNIT_LAMBDA: &[ParamRange] = &[lin("lambda", 0.0, 1.0)];
        const BRIGHTNESS: &[ParamRange] = &[lin("B", 0.0, 1.0)];
        const COLOR: &[ParamRange] = &[lin("C", 0.0, 1.0)];
        const CUTOUT: &[ParamRange] = &[lin("L", 0.0, 0.5)];
        const POSTERIZE: &[ParamRange] = &[lin("B", 1.0, 8.0)];
        const RESCALE: &[ParamRange] = &[lin("L", 0.5, 1.0), ParamRange::Method];
        const ROTATE: &[ParamRange] = &[lin("theta", -45.0, 45.0)];
        const STRENGTH: &[ParamRange] = &[lin("S", 0.0, 1.0)];
        const SHEAR: &[ParamRange] = &[lin("R", -0.3, 0.3)];
        const SOLARIZE: &[ParamRange] = &[lin("T", 0.0, 1.0)];
        const TRANSLATE: &[ParamRange] = &[lin("lambda", -0.3, 0.3)];
        match self {
            Autocontrast | Blur | Equalize | Invert => UNIT_LAMBDA,
            Brightness => BRIGHTNESS,
            Color | Contrast => COLOR,
            Cutout => CUTOUT,
            Identity => &[],
            Posterize => POSTERIZE,
            Rescale => RESCALE,
            Rotate => ROTATE,
            Sharpness | Smooth => STRENGTH,
            ShearX | ShearY => SHEAR,
            Solarize => SOLARIZE,
            TranslateX | TranslateY => TRANSLATE,
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        use TransformKind::*;
        match self {
            Autocontrast => "autocontrast",
            Blur => "blur",
            Brightness => "brightness",
            Color => "color",
            Contrast => "contrast",
            Cutout => "cutout",
            Equalize => "equalize",
            Invert => "invert",
            Identity => "identity",
            Posterize => "posterize",
            Rescale => "rescale",
            Rotate => "rotate",
            Sharpness => "sharpness",
            ShearX => "shear_x",
            ShearY => "shear_y",
            Smooth => "smooth",
            Solarize => "solarize",
            TranslateX => "translate_x",
            TranslateY => "translate_y",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| contract(format!("unknown transformation {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Magnitude {
    Scalar(f32),
    Method(ResampleMethod),
}

fn param_range(kind: TransformKind, param_index: usize) -> Result<ParamRange> {
    kind.params().get(param_index).copied().ok_or_else(|| {
        contract(format!(
            "{kind} has {} parameters, index {param_index} requested",
            kind.params().len()
        ))
    })
}

fn check_bin(kind: TransformKind, param_index: usize, bin: usize) -> Result<ParamRange> {
    let range = param_range(kind, param_index)?;
    if bin >= range.bins() {
        return Err(contract(format!(
            "bin {bin} out of range for {kind} parameter {param_index} ({} bins)",
            range.bins()
        )));
    }
    Ok(range)
}

/// Representative magnitude of a bin: `lo + bin / 16 * (hi - lo)`, or the
/// `bin`-th resampling method.
pub fn bin_to_magnitude(kind: TransformKind, param_index: usize, bin: usize) -> Result<Magnitude> {
    Ok(match check_bin(kind, param_index, bin)? {
        ParamRange::Linear { lo, hi, .. } => {
            let t = bin as f32 / (MAGNITUDE_BINS - 1) as f32;
            Magnitude::Scalar(lo + t * (hi - lo))
        }
        ParamRange::Method => Magnitude::Method(ResampleMethod::ALL[bin]),
    })
}

/// Uniform draw inside bin `bin`'s cell `[lo + bin*w, lo + (bin+1)*w]` where
/// `w = (hi - lo) / 17`. The cell always contains the bin's representative.
pub(crate) fn sample_in_bin<R: Rng + ?Sized>(
    kind: TransformKind,
    param_index: usize,
    bin: usize,
    rng: &mut R,
) -> Result<f32> {
    Ok(match check_bin(kind, param_index, bin)? {
        ParamRange::Linear { lo, hi, .. } => {
            let width = (hi - lo) / MAGNITUDE_BINS as f32;
            let u: f32 = rng.random();
            (lo + (bin as f32 + u) * width).clamp(lo, hi)
        }
        ParamRange::Method => bin as f32,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamValue {
    pub bin: usize,
    /// Continuous magnitude; for the method parameter, the method index.
    pub value: f32,
}

/// A transformation together with one value per parameter. Construction
/// validates bins and ranges, so applying a spec cannot fail.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformSpec {
    kind: TransformKind,
    params: Vec<ParamValue>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self {
            kind: TransformKind::Identity,
            params: Vec::new(),
        }
    }

    /// Spec at the representative magnitude of each bin.
    pub fn at_bins(kind: TransformKind, bins: &[usize]) -> Result<Self> {
        let params = kind
            .params()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let bin = *bins.get(i).ok_or_else(|| {
                    contract(format!("{kind} needs {} bins", kind.params().len()))
                })?;
                let value = match bin_to_magnitude(kind, i, bin)? {
                    Magnitude::Scalar(v) => v,
                    Magnitude::Method(_) => bin as f32,
                };
                Ok(ParamValue { bin, value })
            })
            .collect::<Result<Vec<_>>>()?;
        if bins.len() != params.len() {
            return Err(contract(format!("{kind} needs {} bins", params.len())));
        }
        Ok(Self { kind, params })
    }

    /// Spec with explicit continuous values; each must lie inside its bin's
    /// parameter range.
    pub fn with_values(kind: TransformKind, params: Vec<ParamValue>) -> Result<Self> {
        if params.len() != kind.params().len() {
            return Err(contract(format!(
                "{kind} needs {} parameters, got {}",
                kind.params().len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            match check_bin(kind, i, p.bin)? {
                ParamRange::Linear { lo, hi, .. } => {
                    if !(lo..=hi).contains(&p.value) {
                        return Err(contract(format!(
                            "{kind} parameter {i} value {} outside [{lo}, {hi}]",
                            p.value
                        )));
                    }
                }
                ParamRange::Method => {
                    if p.value != p.bin as f32 {
                        return Err(contract("method value must equal its bin"));
                    }
                }
            }
        }
        Ok(Self { kind, params })
    }

    /// Spec with each parameter drawn uniformly inside the given bin.
    pub fn sample_in_bins<R: Rng + ?Sized>(
        kind: TransformKind,
        bins: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if bins.len() != kind.params().len() {
            return Err(contract(format!("{kind} needs {} bins", kind.params().len())));
        }
        let params = bins
            .iter()
            .enumerate()
            .map(|(i, &bin)| Ok(ParamValue { bin, value: sample_in_bin(kind, i, bin, rng)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, params })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn params(&self) -> &[ParamValue] {
        &self.params
    }

    pub(crate) fn value(&self, i: usize) -> f32 {
        self.params[i].value
    }
}
