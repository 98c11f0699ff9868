// SPDX-License-Identifier: MIT OR Apache-2.0

//! A seeded, untrained text-conditioned video diffusion transformer.
//!
//! The model is a stack of identical blocks (self-attention, cross-attention,
//! MLP, each behind a LayerNorm and a residual connection) over a flattened
//! `frames × height × width` latent grid. Weights are drawn once from a seeded
//! PRNG, so the network carries no visual semantics; it exists to expose the
//! cross-attention computation to an [`AttentionHook`].
//!
//! Sampling follows a rectified-flow Euler schedule `σᵢ = 1 − i/T` with
//! classifier-free guidance between a prompt-conditioned pass and a pass
//! conditioned on a single null token.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_normal, SeededRng};
use crate::tensor::{layer_norm, matmul, matmul_transposed, softmax_rows, Tensor};

const LN_EPS: f64 = 1e-5;
const NULL_TOKEN: &str = "<null>";

/// Architecture and latent geometry of the toy model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub text_dim: usize,
    /// MLP hidden width as a multiple of `model_dim`.
    pub mlp_ratio: usize,
    pub latent_frames: usize,
    pub latent_height: usize,
    pub latent_width: usize,
    pub latent_channels: usize,
    /// Seed for every weight of the network. Independent of the noise seed.
    pub weight_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_blocks: 6,
            model_dim: 64,
            num_heads: 4,
            text_dim: 32,
            mlp_ratio: 4,
            latent_frames: 3,
            latent_height: 6,
            latent_width: 10,
            latent_channels: 4,
            weight_seed: 2026,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("num_blocks", self.num_blocks),
            ("model_dim", self.model_dim),
            ("num_heads", self.num_heads),
            ("text_dim", self.text_dim),
            ("mlp_ratio", self.mlp_ratio),
            ("latent_frames", self.latent_frames),
            ("latent_height", self.latent_height),
            ("latent_width", self.latent_width),
            ("latent_channels", self.latent_channels),
        ];
        for (name, value) in extents {
            if value == 0 {
                return Err(Error::InvalidParameter(format!("model {name} must be >= 1")));
            }
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(Error::InvalidParameter(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    /// Number of visual queries, `F·H·W`.
    pub fn query_count(&self) -> usize {
        self.latent_frames * self.latent_height * self.latent_width
    }

    pub fn latent_dims(&self) -> (usize, usize, usize) {
        (self.latent_frames, self.latent_height, self.latent_width)
    }
}

/// Output clip geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoGeometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: u32,
}

impl Default for VideoGeometry {
    fn default() -> Self {
        Self {
            frames: 25,
            height: 368,
            width: 640,
            fps: 16,
        }
    }
}

/// Per-run sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub num_timesteps: usize,
    pub cfg_scale: f64,
    pub seed: u64,
    pub video: VideoGeometry,
    /// Also bend the unconditional guidance branch.
    pub bend_unconditional: bool,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            num_timesteps: 10,
            cfg_scale: 4.5,
            seed: 41,
            video: VideoGeometry::default(),
            bend_unconditional: false,
        }
    }
}

impl GenerationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.num_timesteps == 0 {
            return Err(Error::InvalidParameter("num_timesteps must be >= 1".into()));
        }
        if !(self.cfg_scale >= 0.0) || !self.cfg_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cfg_scale must be finite and >= 0, got {}",
                self.cfg_scale
            )));
        }
        let v = &self.video;
        if v.frames == 0 || v.height == 0 || v.width == 0 || v.fps == 0 {
            return Err(Error::InvalidParameter(format!("degenerate video geometry {v:?}")));
        }
        Ok(())
    }
}

/// Prompt tokens and their embeddings, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoding {
    pub tokens: Vec<String>,
    pub embeddings: Tensor,
}

/// Normalizes a single whitespace-separated word: lowercase, parentheses
/// removed, leading and trailing punctuation trimmed.
pub fn normalize_word(word: &str) -> String {
    let lowered: String = word
        .chars()
        .filter(|c| *c != '(' && *c != ')')
        .flat_map(char::to_lowercase)
        .collect();
    lowered.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .split_whitespace()
        .map(normalize_word)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Tokens the prompt marks as key subjects by wrapping them in parentheses.
pub fn key_tokens(prompt: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for word in prompt.split_whitespace().filter(|w| w.contains('(')) {
        let t = normalize_word(word);
        if !t.is_empty() && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn token_embedding(token: &str, text_dim: usize) -> Vec<f64> {
    let mut rng = SeededRng::from_label(&format!("token:{token}"));
    (0..text_dim).map(|_| rng.normal()).collect()
}

/// Stand-in text encoder: each token is embedded by a PRNG seeded from its text.
pub fn encode_text(prompt: &str, cfg: &ModelConfig) -> Result<TextEncoding> {
    let tokens = tokenize(prompt);
    if tokens.is_empty() {
        return Err(Error::InvalidParameter("prompt has no tokens".into()));
    }
    let data = tokens.iter().flat_map(|t| token_embedding(t, cfg.text_dim)).collect();
    let embeddings = Tensor::new(&[tokens.len(), cfg.text_dim], data)?;
    Ok(TextEncoding { tokens, embeddings })
}

fn null_encoding(cfg: &ModelConfig) -> TextEncoding {
    let embeddings =
        Tensor::new(&[1, cfg.text_dim], token_embedding(NULL_TOKEN, cfg.text_dim)).expect("text_dim validated");
    TextEncoding {
        tokens: vec![NULL_TOKEN.to_string()],
        embeddings,
    }
}

/// Which half of the classifier-free-guidance pair a forward pass belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Conditional,
    Unconditional,
}

/// Where in the network a cross-attention map is being computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrossAttentionSite {
    pub layer: usize,
    pub timestep: usize,
    pub head: usize,
    pub branch: Branch,
    pub query_count: usize,
    pub key_count: usize,
    /// Latent `(frames, height, width)`; their product is `query_count`.
    pub latent: (usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Scaled logits `QKᵀ/√d_k`.
    PreSoftmax,
    /// Row-stochastic attention map.
    PostSoftmax,
}

/// Intercepts cross-attention maps. `intercept` may replace the map at either
/// stage; `observe` sees the final map as it enters the value product.
pub trait AttentionHook {
    fn intercept(&mut self, stage: Stage, site: &CrossAttentionSite, map: Tensor) -> Result<Tensor>;

    fn observe(&mut self, _site: &CrossAttentionSite, _map: &Tensor) {}
}

/// A hook that leaves every map untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullHook;

impl AttentionHook for NullHook {
    fn intercept(&mut self, _: Stage, _: &CrossAttentionSite, map: Tensor) -> Result<Tensor> {
        Ok(map)
    }
}

impl<F> AttentionHook for F
where
    F: FnMut(Stage, &CrossAttentionSite, Tensor) -> Result<Tensor>,
{
    fn intercept(&mut self, stage: Stage, site: &CrossAttentionSite, map: Tensor) -> Result<Tensor> {
        self(stage, site, map)
    }
}

fn checked(stage: Stage, before: &[usize], after: Tensor) -> Result<Tensor> {
    if after.shape() != before {
        return Err(Error::shape(
            "attention hook",
            format!("{stage:?} map changed shape {before:?} -> {:?}", after.shape()),
        ));
    }
    Ok(after)
}

/// Single-head hookable attention `softmax(QKᵀ/√d_k)·V`.
pub fn cross_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    site: &CrossAttentionSite,
    hook: &mut dyn AttentionHook,
) -> Result<Tensor> {
    let scale = (q.cols() as f64).sqrt();
    let logits = matmul_transposed(q, k)?.map(|x| x / scale);
    let shape = logits.shape().to_vec();
    let logits = checked(
        Stage::PreSoftmax,
        &shape,
        hook.intercept(Stage::PreSoftmax, site, logits)?,
    )?;
    let probs = softmax_rows(&logits);
    let probs = checked(
        Stage::PostSoftmax,
        &shape,
        hook.intercept(Stage::PostSoftmax, site, probs)?,
    )?;
    hook.observe(site, &probs);
    matmul(&probs, v)
}

/// `(1 − s)·uncond + s·cond`, algebraically `uncond + s·(cond − uncond)`.
/// Written in this form so that `s = 0` and `s = 1` reproduce the branches exactly.
pub fn guidance_combine(uncond: &Tensor, cond: &Tensor, scale: f64) -> Result<Tensor> {
    if uncond.shape() != cond.shape() {
        return Err(Error::shape(
            "guidance",
            format!("{:?} vs {:?}", uncond.shape(), cond.shape()),
        ));
    }
    let data = uncond
        .data()
        .iter()
        .zip(cond.data())
        .map(|(u, c)| (1.0 - scale) * u + scale * c)
        .collect();
    Tensor::new(uncond.shape(), data)
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone)]
struct Norm {
    gain: Vec<f64>,
    bias: Vec<f64>,
}

impl Norm {
    fn new(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gain, &self.bias, LN_EPS)
    }
}

fn init_weight(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Tensor {
    let std = 1.0 / (fan_in as f64).sqrt();
    sample_normal(rng, &[fan_in, fan_out]).map(|v| v * std)
}

#[derive(Debug, Clone)]
struct DitBlock {
    norm_self: Norm,
    self_q: Tensor,
    self_k: Tensor,
    self_v: Tensor,
    self_out: Tensor,
    norm_cross: Norm,
    cross_q: Tensor,
    cross_k: Tensor,
    cross_v: Tensor,
    cross_out: Tensor,
    norm_mlp: Norm,
    mlp_in: Tensor,
    mlp_in_bias: Vec<f64>,
    mlp_out: Tensor,
    mlp_out_bias: Vec<f64>,
}

impl DitBlock {
    fn new(cfg: &ModelConfig, rng: &mut SeededRng) -> Self {
        let d = cfg.model_dim;
        let hidden = d * cfg.mlp_ratio;
        Self {
            norm_self: Norm::new(d),
            self_q: init_weight(rng, d, d),
            self_k: init_weight(rng, d, d),
            self_v: init_weight(rng, d, d),
            self_out: init_weight(rng, d, d),
            norm_cross: Norm::new(d),
            cross_q: init_weight(rng, d, d),
            cross_k: init_weight(rng, cfg.text_dim, d),
            cross_v: init_weight(rng, cfg.text_dim, d),
            cross_out: init_weight(rng, d, d),
            norm_mlp: Norm::new(d),
            mlp_in: init_weight(rng, d, hidden),
            mlp_in_bias: vec![0.0; hidden],
            mlp_out: init_weight(rng, hidden, d),
            mlp_out_bias: vec![0.0; d],
        }
    }
}

/// The latent clip being denoised: `query_count × channels`, queries ordered `(f, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Tensor,
}

/// Decoded RGB clip, frames stored back to back as interleaved `u8` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFrames {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: u32,
    pub rgb: Vec<u8>,
}

impl VideoFrames {
    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.height * self.width * 3;
        &self.rgb[i * n..(i + 1) * n]
    }
}

/// The untrained video DiT. Immutable after construction and safe to share.
#[derive(Debug, Clone)]
pub struct ToyDit {
    config: ModelConfig,
    patch_in: Tensor,
    positions: Tensor,
    blocks: Vec<DitBlock>,
    norm_out: Norm,
    head_out: Tensor,
    rgb_projection: Tensor,
    null_text: TextEncoding,
}

impl ToyDit {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.weight_seed);
        let d = config.model_dim;
        let c = config.latent_channels;
        let patch_in = init_weight(&mut rng, c, d);
        let positions = sample_normal(&mut rng, &[config.query_count(), d]).map(|v| 0.5 * v);
        let blocks = (0..config.num_blocks)
            .map(|_| DitBlock::new(&config, &mut rng))
            .collect();
        let head_out = init_weight(&mut rng, d, c);
        let rgb_projection = init_weight(&mut rng, c, 3);
        let null_text = null_encoding(&config);
        Ok(Self {
            config,
            patch_in,
            positions,
            blocks,
            norm_out: Norm::new(d),
            head_out,
            rgb_projection,
            null_text,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encode(&self, prompt: &str) -> Result<TextEncoding> {
        encode_text(prompt, &self.config)
    }

    pub fn null_text(&self) -> &TextEncoding {
        &self.null_text
    }

    fn site(&self, layer: usize, timestep: usize, head: usize, branch: Branch, key_count: usize) -> CrossAttentionSite {
        CrossAttentionSite {
            layer,
            timestep,
            head,
            branch,
            query_count: self.config.query_count(),
            key_count,
            latent: self.config.latent_dims(),
        }
    }

    fn self_attention(&self, block: &DitBlock, h: &Tensor) -> Result<Tensor> {
        let dk = self.config.head_dim();
        let scale = (dk as f64).sqrt();
        let q = matmul(h, &block.self_q)?;
        let k = matmul(h, &block.self_k)?;
        let v = matmul(h, &block.self_v)?;
        let mut heads = Vec::with_capacity(self.config.num_heads);
        for head in 0..self.config.num_heads {
            let qh = q.column_block(head * dk, dk)?;
            let kh = k.column_block(head * dk, dk)?;
            let vh = v.column_block(head * dk, dk)?;
            let probs = softmax_rows(&matmul_transposed(&qh, &kh)?.map(|x| x / scale));
            heads.push(matmul(&probs, &vh)?);
        }
        matmul(&Tensor::hconcat(&heads)?, &block.self_out)
    }

    #[allow(clippy::too_many_arguments)]
    fn cross_attention_layer(
        &self,
        block: &DitBlock,
        h: &Tensor,
        text: &TextEncoding,
        layer: usize,
        timestep: usize,
        branch: Branch,
        hook: &mut dyn AttentionHook,
    ) -> Result<Tensor> {
        let dk = self.config.head_dim();
        let q = matmul(h, &block.cross_q)?;
        let k = matmul(&text.embeddings, &block.cross_k)?;
        let v = matmul(&text.embeddings, &block.cross_v)?;
        let mut heads = Vec::with_capacity(self.config.num_heads);
        for head in 0..self.config.num_heads {
            let site = self.site(layer, timestep, head, branch, text.tokens.len());
            heads.push(cross_attention(
                &q.column_block(head * dk, dk)?,
                &k.column_block(head * dk, dk)?,
                &v.column_block(head * dk, dk)?,
                &site,
                hook,
            )?);
        }
        matmul(&Tensor::hconcat(&heads)?, &block.cross_out)
    }

    /// One transformer block: self-attention, cross-attention, MLP, each pre-normed and residual.
    pub fn dit_block(
        &self,
        x: &Tensor,
        text: &TextEncoding,
        block_index: usize,
        timestep: usize,
        branch: Branch,
        hook: &mut dyn AttentionHook,
    ) -> Result<Tensor> {
        let block = self.blocks.get(block_index).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "block {block_index} out of range for {} blocks",
                self.blocks.len()
            ))
        })?;
        let (q, d) = x.dims2("dit_block")?;
        if q != self.config.query_count() || d != self.config.model_dim {
            return Err(Error::shape(
                "dit_block",
                format!(
                    "expected [{}×{}], got [{q}×{d}]",
                    self.config.query_count(),
                    self.config.model_dim
                ),
            ));
        }
        let x = x.add(&self.self_attention(block, &block.norm_self.apply(x)?)?)?;
        let cross = self.cross_attention_layer(
            block,
            &block.norm_cross.apply(&x)?,
            text,
            block_index,
            timestep,
            branch,
            hook,
        )?;
        let x = x.add(&cross)?;
        let h = block.norm_mlp.apply(&x)?;
        let hidden = matmul(&h, &block.mlp_in)?.add_row(&block.mlp_in_bias)?.map(gelu);
        let mlp = matmul(&hidden, &block.mlp_out)?.add_row(&block.mlp_out_bias)?;
        x.add(&mlp)
    }

    fn time_embedding(&self, sigma: f64) -> Vec<f64> {
        let d = self.config.model_dim;
        let half = d / 2;
        let t = sigma * 1000.0;
        (0..d)
            .map(|i| {
                let k = (i % half.max(1)) as f64;
                let freq = (-(10_000f64.ln()) * k / half.max(1) as f64).exp();
                if i < half {
                    (t * freq).sin()
                } else {
                    (t * freq).cos()
                }
            })
            .collect()
    }

    /// Velocity prediction for latent `z` at noise level `sigma`.
    pub fn forward(
        &self,
        z: &Tensor,
        text: &TextEncoding,
        timestep: usize,
        sigma: f64,
        branch: Branch,
        hook: &mut dyn AttentionHook,
    ) -> Result<Tensor> {
        let mut x = matmul(z, &self.patch_in)?
            .add(&self.positions)?
            .add_row(&self.time_embedding(sigma))?;
        for layer in 0..self.blocks.len() {
            x = self.dit_block(&x, text, layer, timestep, branch, hook)?;
        }
        matmul(&self.norm_out.apply(&x)?, &self.head_out)
    }

    /// The seeded starting noise for a run.
    pub fn initial_noise(&self, seed: u64) -> Tensor {
        sample_normal(
            &mut SeededRng::new(seed),
            &[self.config.query_count(), self.config.latent_channels],
        )
    }

    /// Runs the guided sampler. `hook` sees both branches; sites carry the branch.
    pub fn denoise(
        &self,
        settings: &GenerationSettings,
        prompt: &str,
        hook: &mut dyn AttentionHook,
    ) -> Result<LatentVideo> {
        settings.validate()?;
        let cond = self.encode(prompt)?;
        let steps = settings.num_timesteps;
        let mut z = self.initial_noise(settings.seed);
        for t in 0..steps {
            let sigma = 1.0 - t as f64 / steps as f64;
            let next = 1.0 - (t + 1) as f64 / steps as f64;
            let v_cond = self.forward(&z, &cond, t, sigma, Branch::Conditional, hook)?;
            let v_uncond = self.forward(&z, &self.null_text, t, sigma, Branch::Unconditional, hook)?;
            let v = guidance_combine(&v_uncond, &v_cond, settings.cfg_scale)?;
            let dt = next - sigma;
            z = z.add(&v.map(|x| x * dt))?;
            if !z.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "latent became non-finite at timestep {t}"
                )));
            }
        }
        let (frames, height, width) = self.config.latent_dims();
        Ok(LatentVideo {
            frames,
            height,
            width,
            channels: self.config.latent_channels,
            data: z,
        })
    }

    /// Stand-in decoder: fixed seeded channel→RGB projection, nearest-neighbour
    /// upsampling, and a per-channel min/max stretch to `0..=255` over the clip.
    pub fn decode_latent(&self, z: &LatentVideo, geometry: &VideoGeometry) -> Result<VideoFrames> {
        let rgb = matmul(&z.data, &self.rgb_projection)?;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for row in rgb.data().chunks_exact(3) {
            for c in 0..3 {
                lo[c] = lo[c].min(row[c]);
                hi[c] = hi[c].max(row[c]);
            }
        }
        let quantize = |c: usize, v: f64| -> u8 {
            let span = hi[c] - lo[c];
            if span <= 1e-12 * hi[c].abs().max(lo[c].abs()).max(1.0) {
                128
            } else {
                ((v - lo[c]) / span * 255.0).round().clamp(0.0, 255.0) as u8
            }
        };
        let (of, oh, ow) = (geometry.frames, geometry.height, geometry.width);
        let mut out = Vec::with_capacity(of * oh * ow * 3);
        for f in 0..of {
            let lf = f * z.frames / of;
            for y in 0..oh {
                let ly = y * z.height / oh;
                for x in 0..ow {
                    let lx = x * z.width / ow;
                    let q = (lf * z.height + ly) * z.width + lx;
                    let px = rgb.row(q);
                    for (c, &v) in px.iter().take(3).enumerate() {
                        out.push(quantize(c, v));
                    }
                }
            }
        }
        Ok(VideoFrames {
            frames: of,
            height: oh,
            width: ow,
            fps: geometry.fps,
            rgb: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_blocks: 4,
            model_dim: 16,
            num_heads: 2,
            text_dim: 8,
            latent_frames: 2,
            latent_height: 3,
            latent_width: 4,
            ..ModelConfig::default()
        }
    }

    fn site(key_count: usize) -> CrossAttentionSite {
        CrossAttentionSite {
            layer: 0,
            timestep: 0,
            head: 0,
            branch: Branch::Conditional,
            query_count: 1,
            key_count,
            latent: (1, 1, 1),
        }
    }

    #[test]
    fn tokenization_rules() {
        assert_eq!(tokenize("A (rose)"), vec!["a", "rose"]);
        assert_eq!(tokenize("lead (actor), walking"), vec!["lead", "actor", "walking"]);
        assert_eq!(tokenize("Close-up shot"), vec!["close-up", "shot"]);
        assert_eq!(
            key_tokens("a (horse) in a (field) and a (horse)"),
            vec!["horse", "field"]
        );
    }

    #[test]
    fn embeddings_are_per_token_and_case_folded() {
        let cfg = tiny();
        let a = encode_text("white horse", &cfg).unwrap();
        let b = encode_text("Horse on a hill", &cfg).unwrap();
        assert_eq!(a.embeddings.row(1), b.embeddings.row(0));
        assert_ne!(a.embeddings.row(0), a.embeddings.row(1));
        assert!(encode_text("  ", &cfg).is_err());
        assert!(encode_text("", &cfg).is_err());
    }

    #[test]
    fn cross_attention_analytic_case() {
        let q = Tensor::from_rows(&[vec![1.0]]);
        let k = Tensor::from_rows(&[vec![1.0], vec![0.0]]);
        let v = Tensor::from_rows(&[vec![2.0], vec![4.0]]);
        let out = cross_attention(&q, &k, &v, &site(2), &mut NullHook).unwrap();
        let p = 1.0f64.exp() / (1.0f64.exp() + 1.0);
        assert!((out.data()[0] - 2.538).abs() < 1e-3);
        assert!((out.data()[0] - (2.0 * p + 4.0 * (1.0 - p))).abs() < 1e-12);

        let mut identity = |_: Stage, _: &CrossAttentionSite, m: Tensor| Ok(m);
        let same = cross_attention(&q, &k, &v, &site(2), &mut identity).unwrap();
        assert_eq!(same, out);
    }

    #[test]
    fn one_hot_attention_selects_value_row() {
        let q = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5]]);
        let k = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let v = Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 7.0], vec![3.0, 3.0]]);
        let mut keep_second = |stage: Stage, _: &CrossAttentionSite, mut m: Tensor| {
            if stage == Stage::PostSoftmax {
                let c = m.cols();
                for (i, x) in m.data_mut().iter_mut().enumerate() {
                    if i % c != 1 {
                        *x = 0.0;
                    }
                }
                for row in m.data_mut().chunks_exact_mut(c) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= s);
                }
            }
            Ok(m)
        };
        let mut s = site(3);
        s.query_count = 2;
        let out = cross_attention(&q, &k, &v, &s, &mut keep_second).unwrap();
        assert_eq!(out.data(), &[0.25, 7.0, 0.25, 7.0]);
    }

    #[test]
    fn hook_changing_shape_is_rejected() {
        let q = Tensor::from_rows(&[vec![1.0]]);
        let k = Tensor::from_rows(&[vec![1.0], vec![0.0]]);
        let mut bad = |_: Stage, _: &CrossAttentionSite, _m: Tensor| Ok(Tensor::zeros(&[1, 3]));
        let err = cross_attention(&q, &k, &k, &site(2), &mut bad).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn guidance_degenerate_scales_are_exact() {
        let u = Tensor::from_rows(&[vec![0.1, -3.7, 12.25]]);
        let c = Tensor::from_rows(&[vec![1.3, 0.2, -8.0]]);
        assert_eq!(guidance_combine(&u, &c, 0.0).unwrap(), u);
        assert_eq!(guidance_combine(&u, &c, 1.0).unwrap(), c);
    }

    #[test]
    fn block_preserves_shape_and_is_deterministic() {
        let a = ToyDit::new(tiny()).unwrap();
        let b = ToyDit::new(tiny()).unwrap();
        let text = a.encode("a red rose").unwrap();
        let x = sample_normal(&mut SeededRng::new(3), &[24, 16]);
        let ya = a
            .dit_block(&x, &text, 1, 0, Branch::Conditional, &mut NullHook)
            .unwrap();
        let yb = b
            .dit_block(&x, &text, 1, 0, Branch::Conditional, &mut NullHook)
            .unwrap();
        assert_eq!(ya.shape(), x.shape());
        assert_eq!(ya, yb);
        assert!(a
            .dit_block(
                &Tensor::zeros(&[5, 16]),
                &text,
                0,
                0,
                Branch::Conditional,
                &mut NullHook
            )
            .is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny();
        cfg.num_heads = 3;
        assert!(ToyDit::new(cfg).is_err());
        let mut s = GenerationSettings {
            num_timesteps: 0,
            ..GenerationSettings::default()
        };
        assert!(s.validate().is_err());
        s.num_timesteps = 1;
        s.cfg_scale = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn constant_latent_decodes_to_mid_gray() {
        let model = ToyDit::new(tiny()).unwrap();
        let z = LatentVideo {
            frames: 2,
            height: 3,
            width: 4,
            channels: 4,
            data: Tensor::filled(&[24, 4], 0.7),
        };
        let geometry = VideoGeometry {
            frames: 3,
            height: 5,
            width: 7,
            fps: 16,
        };
        let frames = model.decode_latent(&z, &geometry).unwrap();
        assert_eq!(frames.rgb.len(), 3 * 5 * 7 * 3);
        assert!(frames.rgb.iter().all(|&p| p == 128));
    }
}
