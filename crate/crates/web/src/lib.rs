// SPDX-License-Identifier: MIT OR Apache-2.0

//! Browser demo: bend a synthetic attention map, run a small bent generation,
//! and count the variations of a sweep configuration.
//!
//! Every exported function has a plain Rust counterpart returning
//! `Result<_, String>` so it can be tested natively.

use attnbend_core::bend_ops::{AttentionVolume, PaddingMode};
use attnbend_core::bender::{BendOperation, IndexRange, TokenMatching, Transform};
use attnbend_core::dit::{GenerationSettings, ModelConfig, ToyDit, VideoGeometry};
use attnbend_core::pipeline::generate;
use attnbend_core::sweep::{expand_variations, SweepConfig};
use wasm_bindgen::prelude::*;

/// Maps `[0, 1]` to black → red → yellow → white.
fn heat(v: f64) -> [u8; 4] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let channel = |lo: f64| (((v - lo) * 3.0).clamp(0.0, 1.0) * 255.0).round() as u8;
    [channel(0.0), channel(1.0 / 3.0), channel(2.0 / 3.0), 255]
}

/// RGBA pixels of a `width × height` plane, scaled by `max`.
fn heat_rgba(plane: &[f64], max: f64) -> Vec<u8> {
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    plane.iter().flat_map(|&v| heat(v * scale)).collect()
}

fn transform(operation: &str, parameter: &str, value: f64) -> Result<Transform, String> {
    let value = Transform::takes_value(operation).then_some(value);
    Transform::from_parts(operation, parameter, value).map_err(|e| e.to_string())
}

/// A soft off-center blob with a small bright square, the kind of map a
/// subject token produces.
pub fn synthetic_map(width: usize, height: usize) -> AttentionVolume {
    let (cx, cy) = (width as f64 * 0.35, height as f64 * 0.4);
    let sigma = width.min(height) as f64 * 0.15;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let mut v = (-d2 / (2.0 * sigma * sigma)).exp();
            let (sx, sy) = (x as f64 / width as f64, y as f64 / height as f64);
            if (0.65..0.8).contains(&sx) && (0.6..0.75).contains(&sy) {
                v = v.max(0.8);
            }
            data.push(v);
        }
    }
    AttentionVolume::new(1, height, width, data).expect("geometry matches data")
}

/// Original and bent synthetic maps side by side, as RGBA of size `2·width × height`.
pub fn bend_preview_rgba(
    operation: &str,
    parameter: &str,
    value: f64,
    strength: f64,
    padding: &str,
    width: usize,
    height: usize,
) -> Result<Vec<u8>, String> {
    if width == 0 || height == 0 || width * height > 1 << 20 {
        return Err(format!("preview size {width}×{height} is out of range"));
    }
    let pad: PaddingMode = padding.parse().map_err(|e: attnbend_core::Error| e.to_string())?;
    let t = transform(operation, parameter, value)?;
    t.validate().map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&strength) {
        return Err(format!("strength must lie in [0, 1], got {strength}"));
    }
    let original = synthetic_map(width, height);
    let bent = t.apply(&original, pad).map_err(|e| e.to_string())?;
    let bent = attnbend_core::bend_ops::blend(&original, &bent, strength).map_err(|e| e.to_string())?;
    let max = original.data().iter().chain(bent.data()).copied().fold(0.0, f64::max);
    let (left, right) = (heat_rgba(original.data(), max), heat_rgba(bent.data(), max));
    let mut out = Vec::with_capacity(left.len() * 2);
    for y in 0..height {
        let row = y * width * 4..(y + 1) * width * 4;
        out.extend_from_slice(&left[row.clone()]);
        out.extend_from_slice(&right[row]);
    }
    Ok(out)
}

/// One decoded frame and one token's attention map from a small bent generation.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct GenerationPreview {
    width: usize,
    height: usize,
    frame: Vec<u8>,
    attention_width: usize,
    attention_height: usize,
    attention: Vec<u8>,
    token: String,
}

#[wasm_bindgen]
impl GenerationPreview {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// RGBA of the middle output frame.
    #[wasm_bindgen(getter)]
    pub fn frame(&self) -> Vec<u8> {
        self.frame.clone()
    }

    #[wasm_bindgen(getter, js_name = attentionWidth)]
    pub fn attention_width(&self) -> usize {
        self.attention_width
    }

    #[wasm_bindgen(getter, js_name = attentionHeight)]
    pub fn attention_height(&self) -> usize {
        self.attention_height
    }

    /// RGBA heat map of the recorded token at the last timestep, middle latent frame.
    #[wasm_bindgen(getter)]
    pub fn attention(&self) -> Vec<u8> {
        self.attention.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn token(&self) -> String {
        self.token.clone()
    }
}

const PREVIEW_GEOMETRY: VideoGeometry = VideoGeometry {
    frames: 3,
    height: 96,
    width: 160,
    fps: 16,
};

/// Runs the default 6-block model on `prompt` with one bend on every layer and
/// timestep; `operation == "none"` gives the baseline.
#[allow(clippy::too_many_arguments)]
pub fn generation_preview(
    prompt: &str,
    seed: u64,
    operation: &str,
    parameter: &str,
    value: f64,
    strength: f64,
    tokens: &str,
    layers: &str,
) -> Result<GenerationPreview, String> {
    let model = ToyDit::new(ModelConfig::default()).map_err(|e| e.to_string())?;
    let settings = GenerationSettings {
        seed,
        video: PREVIEW_GEOMETRY,
        ..GenerationSettings::default()
    };
    let mut ops = Vec::new();
    if operation != "none" {
        let mut op = BendOperation::new(transform(operation, parameter, value)?);
        op.strength = strength;
        op.token_target = tokens.parse().map_err(|e: attnbend_core::Error| e.to_string())?;
        op.layer_target = IndexRange::parse(layers).map_err(|e| e.to_string())?;
        ops.push(op);
    }
    let run = generate(&model, &settings, prompt, &ops, TokenMatching::Strict).map_err(|e| e.to_string())?;
    let video = &run.video;
    let frame = video
        .frame(video.frames / 2)
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect();
    let last = run
        .attention
        .iter()
        .map(|r| r.timestep)
        .max()
        .ok_or("no attention was recorded")?;
    let record = run
        .attention
        .iter()
        .find(|r| r.timestep == last)
        .ok_or("no attention was recorded")?;
    let volume = &record.volume;
    let plane = volume.frame(volume.frames() / 2);
    let max = plane.iter().copied().fold(0.0, f64::max);
    Ok(GenerationPreview {
        width: video.width,
        height: video.height,
        frame,
        attention_width: volume.width(),
        attention_height: volume.height(),
        attention: heat_rgba(plane, max),
        token: record.token.clone(),
    })
}

/// `total baselines prompts seeds` for a YAML or JSON sweep configuration.
pub fn count_variations(config: &str) -> Result<[usize; 4], String> {
    let config = SweepConfig::parse(config).map_err(|e| e.to_string())?;
    let records = expand_variations(&config).map_err(|e| e.to_string())?;
    let baselines = records.iter().filter(|r| r.baseline).count();
    let prompts = attnbend_core::sweep::expand_template(&config.template)
        .map_err(|e| e.to_string())?
        .len();
    Ok([records.len(), baselines, prompts, config.seed_list().len()])
}

#[wasm_bindgen(js_name = bendPreview)]
pub fn bend_preview_js(
    operation: &str,
    parameter: &str,
    value: f64,
    strength: f64,
    padding: &str,
    width: usize,
    height: usize,
) -> Result<Vec<u8>, JsError> {
    bend_preview_rgba(operation, parameter, value, strength, padding, width, height).map_err(|e| JsError::new(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = generatePreview)]
pub fn generation_preview_js(
    prompt: &str,
    seed: u32,
    operation: &str,
    parameter: &str,
    value: f64,
    strength: f64,
    tokens: &str,
    layers: &str,
) -> Result<GenerationPreview, JsError> {
    generation_preview(
        prompt,
        seed as u64,
        operation,
        parameter,
        value,
        strength,
        tokens,
        layers,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = countVariations)]
pub fn count_variations_js(config: &str) -> Result<Vec<u32>, JsError> {
    count_variations(config)
        .map(|c| c.iter().map(|&n| n as u32).collect())
        .map_err(|e| JsError::new(&e))
}
