// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference implementations and fixtures shared by the integration tests.
//!
//! The oracles here are written against the operation definitions, not the
//! library code: geometric ops are one generic inverse-affine sampler, and blur
//! is a dense 2-D convolution over the full square window.

#![allow(dead_code)]

use attnbend_core::bend_ops::{AttentionVolume, PaddingMode};
use attnbend_core::dit::{AttentionHook, CrossAttentionSite, GenerationSettings, ModelConfig, Stage, VideoGeometry};
use attnbend_core::rng::SeededRng;
use attnbend_core::tensor::Tensor;

pub const APPENDIX_CONFIG: &str = include_str!("../../../../configs/comprehensive.yaml");
pub const SCALE_LAYERS_CONFIG: &str = include_str!("../../../../configs/scale_layers.yaml");

/// A small model with the full 30-block depth of the sweep default.
pub fn tiny_model(num_blocks: usize) -> ModelConfig {
    ModelConfig {
        num_blocks,
        model_dim: 16,
        num_heads: 2,
        text_dim: 8,
        mlp_ratio: 2,
        latent_frames: 2,
        latent_height: 4,
        latent_width: 4,
        latent_channels: 4,
        weight_seed: 7,
    }
}

pub fn small_settings(seed: u64) -> GenerationSettings {
    GenerationSettings {
        num_timesteps: 10,
        cfg_scale: 4.5,
        seed,
        video: VideoGeometry {
            frames: 4,
            height: 12,
            width: 16,
            fps: 8,
        },
        bend_unconditional: false,
    }
}

/// Padding by repeated mirroring, one reflection per loop iteration.
pub fn oracle_index(i: isize, n: usize, pad: PaddingMode) -> Option<usize> {
    let n = n as isize;
    match pad {
        PaddingMode::Zeros => (0 <= i && i < n).then_some(i as usize),
        PaddingMode::Border => Some(i.max(0).min(n - 1) as usize),
        PaddingMode::Reflection => {
            if n == 1 {
                return Some(0);
            }
            let mut i = i;
            while i < 0 || i >= n {
                i = if i < 0 { -i } else { 2 * (n - 1) - i };
            }
            Some(i as usize)
        }
    }
}

fn pixel(frame: &[f64], w: usize, h: usize, x: isize, y: isize, pad: PaddingMode) -> f64 {
    match (oracle_index(x, w, pad), oracle_index(y, h, pad)) {
        (Some(x), Some(y)) => frame[y * w + x],
        _ => 0.0,
    }
}

/// Tent-weighted sum over the four integer neighbours of `(x, y)`.
pub fn oracle_bilinear(frame: &[f64], w: usize, h: usize, x: f64, y: f64, pad: PaddingMode) -> f64 {
    let (x0, y0) = (x.floor() as isize, y.floor() as isize);
    let mut acc = 0.0;
    for yi in [y0, y0 + 1] {
        for xi in [x0, x0 + 1] {
            let weight = (1.0 - (x - xi as f64).abs()) * (1.0 - (y - yi as f64).abs());
            if weight != 0.0 {
                acc += weight * pixel(frame, w, h, xi, yi, pad);
            }
        }
    }
    acc
}

/// An output pixel `p` reads the source at `a·(p − c) + c + b`, with `c` the frame center.
#[derive(Debug, Clone, Copy)]
pub struct InverseAffine {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl InverseAffine {
    pub fn translate(dx: f64, dy: f64, w: usize, h: usize) -> Self {
        Self {
            a: [[1.0, 0.0], [0.0, 1.0]],
            b: [-dx * w as f64, -dy * h as f64],
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self {
            a: [[1.0 / sx, 0.0], [0.0, 1.0 / sy]],
            b: [0.0, 0.0],
        }
    }

    /// Counterclockwise on screen: with rows growing downward, the inverse map
    /// is the plain rotation matrix applied to `(x, y)` offsets.
    pub fn rotate(degrees: f64) -> Self {
        let t = degrees * std::f64::consts::PI / 180.0;
        Self {
            a: [[t.cos(), -t.sin()], [t.sin(), t.cos()]],
            b: [0.0, 0.0],
        }
    }

    pub fn flip_horizontal() -> Self {
        Self::scale(-1.0, 1.0)
    }

    pub fn flip_vertical() -> Self {
        Self::scale(1.0, -1.0)
    }
}

pub fn oracle_affine(v: &AttentionVolume, m: InverseAffine, pad: PaddingMode) -> Vec<f64> {
    let (frames, h, w) = v.dims();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(frames * h * w);
    for f in 0..frames {
        let frame = v.frame(f);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                let sx = m.a[0][0] * px + m.a[0][1] * py + cx + m.b[0];
                let sy = m.a[1][0] * px + m.a[1][1] * py + cy + m.b[1];
                out.push(oracle_bilinear(frame, w, h, sx, sy, pad));
            }
        }
    }
    out
}

/// Dense convolution with the normalized 2-D Gaussian over a `(2r+1)²` window, `r = ceil(3σ)`.
pub fn oracle_blur(v: &AttentionVolume, sigma: f64, pad: PaddingMode) -> Vec<f64> {
    let (frames, h, w) = v.dims();
    let r = (3.0 * sigma).ceil() as isize;
    let mut weights = Vec::new();
    for j in -r..=r {
        for i in -r..=r {
            weights.push((i, j, (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = weights.iter().map(|(_, _, g)| g).sum();
    let mut out = Vec::with_capacity(frames * h * w);
    for f in 0..frames {
        let frame = v.frame(f);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let acc: f64 = weights
                    .iter()
                    .map(|&(i, j, g)| g * pixel(frame, w, h, x + i, y + j, pad))
                    .sum();
                out.push(acc / total);
            }
        }
    }
    out
}

pub fn oracle_sharpen(v: &AttentionVolume, amount: f64, pad: PaddingMode) -> Vec<f64> {
    let blurred = oracle_blur(v, 1.0, pad);
    v.data()
        .iter()
        .zip(blurred)
        .map(|(x, b)| x + amount * (x - b))
        .collect()
}

pub fn random_volume(rng: &mut SeededRng, max_extent: usize) -> AttentionVolume {
    let mut extent = || 1 + (rng.next_u64() % max_extent as u64) as usize;
    let (f, h, w) = (extent(), extent(), extent());
    let data = (0..f * h * w).map(|_| uniform(rng, 0.0, 1.0)).collect();
    AttentionVolume::new(f, h, w, data).unwrap()
}

pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * unit
}

pub fn pick<'a, T>(rng: &mut SeededRng, items: &'a [T]) -> &'a T {
    &items[(rng.next_u64() % items.len() as u64) as usize]
}

pub const PADDINGS: [PaddingMode; 3] = [PaddingMode::Border, PaddingMode::Zeros, PaddingMode::Reflection];

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Every regular file under `root`, as sorted relative paths with contents.
pub fn tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// The oracle counterpart of `Transform::apply`.
pub fn oracle_transform(t: &attnbend_core::bender::Transform, v: &AttentionVolume, pad: PaddingMode) -> Vec<f64> {
    use attnbend_core::bender::Transform;
    let (_, h, w) = v.dims();
    match *t {
        Transform::Scale(s) => oracle_affine(v, InverseAffine::scale(s, s), pad),
        Transform::ScaleX(s) => oracle_affine(v, InverseAffine::scale(s, 1.0), pad),
        Transform::Rotate(deg) => oracle_affine(v, InverseAffine::rotate(deg), pad),
        Transform::TranslateX(dx) => oracle_affine(v, InverseAffine::translate(dx, 0.0, w, h), pad),
        Transform::TranslateY(dy) => oracle_affine(v, InverseAffine::translate(0.0, dy, w, h), pad),
        Transform::FlipHorizontal => oracle_affine(v, InverseAffine::flip_horizontal(), pad),
        Transform::FlipVertical => oracle_affine(v, InverseAffine::flip_vertical(), pad),
        Transform::Blur(s) => oracle_blur(v, s, pad),
        Transform::Sharpen(a) => oracle_sharpen(v, a, pad),
        Transform::Amplify(f) => v.data().iter().map(|x| x * f).collect(),
    }
}

/// A random transform with magnitudes spanning the useful range of each op.
pub fn random_transform(rng: &mut SeededRng) -> attnbend_core::bender::Transform {
    use attnbend_core::bender::Transform;
    match rng.next_u64() % 10 {
        0 => Transform::Scale(uniform(rng, 0.25, 4.0)),
        1 => Transform::ScaleX(uniform(rng, 0.25, 4.0)),
        2 => Transform::Rotate(uniform(rng, -180.0, 180.0)),
        3 => Transform::TranslateX(uniform(rng, -1.0, 1.0)),
        4 => Transform::TranslateY(uniform(rng, -1.0, 1.0)),
        5 => Transform::FlipHorizontal,
        6 => Transform::FlipVertical,
        7 => Transform::Blur(uniform(rng, 0.3, 3.0)),
        8 => Transform::Sharpen(uniform(rng, 0.1, 3.0)),
        _ => Transform::Amplify(uniform(rng, 0.0, 5.0)),
    }
}

/// Wraps a hook and keeps every map it sees, in call order.
pub struct Capture<H> {
    pub inner: H,
    /// `(site, map before the post-softmax intercept, map after it)`.
    pub post: Vec<(CrossAttentionSite, Tensor, Tensor)>,
    /// `(site, map entering the value product)`.
    pub observed: Vec<(CrossAttentionSite, Tensor)>,
}

impl<H> Capture<H> {
    pub fn new(inner: H) -> Self {
        Self {
            inner,
            post: Vec::new(),
            observed: Vec::new(),
        }
    }
}

impl<H: AttentionHook> AttentionHook for Capture<H> {
    fn intercept(&mut self, stage: Stage, site: &CrossAttentionSite, map: Tensor) -> attnbend_core::Result<Tensor> {
        let before = (stage == Stage::PostSoftmax).then(|| map.clone());
        let out = self.inner.intercept(stage, site, map)?;
        if let Some(before) = before {
            self.post.push((*site, before, out.clone()));
        }
        Ok(out)
    }

    fn observe(&mut self, site: &CrossAttentionSite, map: &Tensor) {
        self.inner.observe(site, map);
        self.observed.push((*site, map.clone()));
    }
}
