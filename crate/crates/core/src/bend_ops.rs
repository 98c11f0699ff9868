// SPDX-License-Identifier: MIT OR Apache-2.0

//! Spatial transforms on attention volumes.
//!
//! Every operation acts on each frame's `H×W` slice independently. Geometric
//! operations use inverse-mapped bilinear sampling in pixel-center
//! coordinates with the frame center at `((W−1)/2, (H−1)/2)`: each output
//! pixel looks up the source position it came from, and neighbours that fall
//! outside the frame are fetched according to the [`PaddingMode`].
//!
//! Identity parameters short-circuit, so identity invariants hold bit-exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this sigma, blur is the identity.
pub const MIN_BLUR_SIGMA: f64 = 1e-6;
/// Below this magnitude, sharpen is the identity.
pub const MIN_SHARPEN_AMOUNT: f64 = 1e-12;
/// Inner blur sigma used by unsharp masking.
pub const SHARPEN_SIGMA: f64 = 1.0;
/// Pixel shifts this close to an integer are snapped to it.
const INTEGER_SNAP: f64 = 1e-9;

/// A per-token spatial attention field of shape `frames × height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVolume {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl AttentionVolume {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::shape(
                "attention_volume",
                format!("extents must be positive, got {frames}×{height}×{width}"),
            ));
        }
        if data.len() != frames * height * width {
            return Err(Error::shape(
                "attention_volume",
                format!(
                    "{frames}×{height}×{width} needs {} values, got {}",
                    frames * height * width,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![value; frames * height * width],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[f * n..(f + 1) * n]
    }

    pub fn get(&self, f: usize, y: usize, x: usize) -> f64 {
        self.data[(f * self.height + y) * self.width + x]
    }

    fn map_frames(&self, mut per_frame: impl FnMut(&[f64], &mut [f64])) -> Self {
        let n = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for (src, dst) in self.data.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            per_frame(src, dst);
        }
        Self { data: out, ..*self }
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        Self { data, ..*self }
    }
}

/// How samples outside the frame are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    /// Replicate the nearest edge pixel.
    #[default]
    Border,
    Zeros,
    /// Mirror about the edge pixel without repeating it.
    Reflection,
}

impl PaddingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PaddingMode::Border => "border",
            PaddingMode::Zeros => "zeros",
            PaddingMode::Reflection => "reflection",
        }
    }

    /// Maps a possibly out-of-range index to an in-range one, or `None` for a zero fill.
    pub fn resolve(self, i: isize, n: usize) -> Option<usize> {
        let n = n as isize;
        if (0..n).contains(&i) {
            return Some(i as usize);
        }
        match self {
            PaddingMode::Zeros => None,
            PaddingMode::Border => Some(i.clamp(0, n - 1) as usize),
            PaddingMode::Reflection => {
                if n == 1 {
                    return Some(0);
                }
                let period = 2 * (n - 1);
                let m = i.rem_euclid(period);
                Some(if m < n { m } else { period - m } as usize)
            }
        }
    }
}

impl fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "border" | "replicate" => Ok(PaddingMode::Border),
            "zeros" | "zero" => Ok(PaddingMode::Zeros),
            "reflection" | "reflect" => Ok(PaddingMode::Reflection),
            other => Err(Error::Parse(format!(
                "unknown padding mode `{other}` (expected border, zeros, or reflection)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror left-right.
    Horizontal,
    /// Mirror top-bottom.
    Vertical,
}

fn fetch(frame: &[f64], w: usize, h: usize, x: isize, y: isize, pad: PaddingMode) -> f64 {
    match (pad.resolve(x, w), pad.resolve(y, h)) {
        (Some(x), Some(y)) => frame[y * w + x],
        _ => 0.0,
    }
}

fn bilinear(frame: &[f64], w: usize, h: usize, x: f64, y: f64, pad: PaddingMode) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as isize, y0 as isize);
    let top = fetch(frame, w, h, ix, iy, pad) * (1.0 - fx) + fetch(frame, w, h, ix + 1, iy, pad) * fx;
    let bottom = fetch(frame, w, h, ix, iy + 1, pad) * (1.0 - fx) + fetch(frame, w, h, ix + 1, iy + 1, pad) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples every frame; `source` maps an output pixel `(x, y)` to its source position.
fn resample(v: &AttentionVolume, pad: PaddingMode, source: impl Fn(f64, f64) -> (f64, f64)) -> AttentionVolume {
    let (w, h) = (v.width, v.height);
    v.map_frames(|src, dst| {
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = source(x as f64, y as f64);
                dst[y * w + x] = bilinear(src, w, h, sx, sy, pad);
            }
        }
    })
}

fn center(v: &AttentionVolume) -> (f64, f64) {
    ((v.width as f64 - 1.0) / 2.0, (v.height as f64 - 1.0) / 2.0)
}

fn snap(shift: f64) -> f64 {
    let r = shift.round();
    if (shift - r).abs() < INTEGER_SNAP {
        r
    } else {
        shift
    }
}

pub fn apply_flip(v: &AttentionVolume, axis: FlipAxis) -> AttentionVolume {
    let (w, h) = (v.width, v.height);
    v.map_frames(|src, dst| {
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = match axis {
                    FlipAxis::Horizontal => (w - 1 - x, y),
                    FlipAxis::Vertical => (x, h - 1 - y),
                };
                dst[y * w + x] = src[sy * w + sx];
            }
        }
    })
}

/// Shifts content by `dx·W` pixels right and `dy·H` pixels down.
pub fn apply_translate(v: &AttentionVolume, dx: f64, dy: f64, pad: PaddingMode) -> Result<AttentionVolume> {
    if !dx.is_finite() || !dy.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "translate offsets must be finite, got ({dx}, {dy})"
        )));
    }
    if dx == 0.0 && dy == 0.0 {
        return Ok(v.clone());
    }
    let sx = snap(dx * v.width as f64);
    let sy = snap(dy * v.height as f64);
    Ok(resample(v, pad, |x, y| (x - sx, y - sy)))
}

/// Uniform scaling about the frame center; `factor > 1` magnifies.
pub fn apply_scale(v: &AttentionVolume, factor: f64, pad: PaddingMode) -> Result<AttentionVolume> {
    apply_scale_xy(v, factor, factor, pad)
}

/// Anisotropic scaling about the frame center.
pub fn apply_scale_xy(v: &AttentionVolume, sx: f64, sy: f64, pad: PaddingMode) -> Result<AttentionVolume> {
    if !(sx > 0.0 && sx.is_finite() && sy > 0.0 && sy.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale factors must be finite and > 0, got ({sx}, {sy})"
        )));
    }
    if sx == 1.0 && sy == 1.0 {
        return Ok(v.clone());
    }
    let (cx, cy) = center(v);
    Ok(resample(v, pad, |x, y| (cx + (x - cx) / sx, cy + (y - cy) / sy)))
}

/// Counterclockwise rotation (as displayed, rows growing downward) about the frame center.
pub fn apply_rotate(v: &AttentionVolume, degrees: f64, pad: PaddingMode) -> Result<AttentionVolume> {
    if !degrees.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rotation angle must be finite, got {degrees}"
        )));
    }
    if degrees == 0.0 {
        return Ok(v.clone());
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = center(v);
    Ok(resample(v, pad, |x, y| {
        // Work in a y-up frame so positive angles turn content counterclockwise.
        let u = x - cx;
        let w = cy - y;
        let su = cos * u + sin * w;
        let sw = -sin * u + cos * w;
        (cx + su, cy - sw)
    }))
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur of every frame.
pub fn apply_blur(v: &AttentionVolume, sigma: f64, pad: PaddingMode) -> Result<AttentionVolume> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma < MIN_BLUR_SIGMA {
        return Ok(v.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (v.width, v.height);
    let mut tmp = vec![0.0; w * h];
    Ok(v.map_frames(|src, dst| {
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * fetch(src, w, h, x as isize + k as isize - radius, y as isize, pad))
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * fetch(&tmp, w, h, x as isize, y as isize + k as isize - radius, pad))
                    .sum();
            }
        }
    }))
}

/// Unsharp mask: `v + amount·(v − blur(v, 1.0))`. Negative outputs are kept.
pub fn apply_sharpen(v: &AttentionVolume, amount: f64, pad: PaddingMode) -> Result<AttentionVolume> {
    if !(amount >= 0.0) || !amount.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sharpen amount must be finite and >= 0, got {amount}"
        )));
    }
    if amount < MIN_SHARPEN_AMOUNT {
        return Ok(v.clone());
    }
    let blurred = apply_blur(v, SHARPEN_SIGMA, pad)?;
    let data = v
        .data
        .iter()
        .zip(&blurred.data)
        .map(|(x, b)| x + amount * (x - b))
        .collect();
    Ok(v.with_data(data))
}

pub fn apply_amplify(v: &AttentionVolume, factor: f64) -> Result<AttentionVolume> {
    if !(factor >= 0.0) || !factor.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "amplify factor must be finite and >= 0, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(v.clone());
    }
    Ok(v.with_data(v.data.iter().map(|x| x * factor).collect()))
}

/// `(1 − strength)·original + strength·bent`.
pub fn blend(original: &AttentionVolume, bent: &AttentionVolume, strength: f64) -> Result<AttentionVolume> {
    if original.dims() != bent.dims() {
        return Err(Error::shape(
            "blend",
            format!("{:?} vs {:?}", original.dims(), bent.dims()),
        ));
    }
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::InvalidParameter(format!(
            "strength must lie in [0, 1], got {strength}"
        )));
    }
    if strength == 0.0 {
        return Ok(original.clone());
    }
    if strength == 1.0 {
        return Ok(bent.clone());
    }
    let data = original
        .data
        .iter()
        .zip(&bent.data)
        .map(|(o, b)| (1.0 - strength) * o + strength * b)
        .collect();
    Ok(original.with_data(data))
}
