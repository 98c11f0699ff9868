// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-attention interception: targeting, reshape → transform → renormalize →
//! flatten, and recording of per-token attention volumes.
//!
//! A flat attention map has one row per visual query and one column per text
//! token. Column `k` reshaped to `(frames, height, width)` is the spatial
//! attention field of token `k`, which is what the transforms in
//! [`crate::bend_ops`] operate on.

use std::fmt;
use std::str::FromStr;

use crate::bend_ops::{
    apply_amplify, apply_blur, apply_flip, apply_rotate, apply_scale, apply_scale_xy, apply_sharpen, apply_translate,
    blend, AttentionVolume, FlipAxis, PaddingMode,
};
use crate::dit::{AttentionHook, Branch, CrossAttentionSite, GenerationSettings, ModelConfig, Stage, TextEncoding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row sums at or below this are treated as degenerate by [`renormalize_rows`].
pub const MIN_ROW_SUM: f64 = 1e-12;

/// A single spatial transform with its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// Uniform scale (`scale` / `scale_factor`).
    Scale(f64),
    /// Horizontal-only scale (`scale` / `scale_x`).
    ScaleX(f64),
    /// Degrees, counterclockwise.
    Rotate(f64),
    /// Fraction of the latent width.
    TranslateX(f64),
    /// Fraction of the latent height.
    TranslateY(f64),
    FlipHorizontal,
    FlipVertical,
    Blur(f64),
    Sharpen(f64),
    Amplify(f64),
}

impl Transform {
    /// Every accepted `(operation, parameter_name)` pair.
    pub const VOCABULARY: [(&'static str, &'static str); 10] = [
        ("scale", "scale_factor"),
        ("scale", "scale_x"),
        ("rotate", "angle"),
        ("translate", "translate_x"),
        ("translate", "translate_y"),
        ("flip", "flip_horizontal"),
        ("flip", "flip_vertical"),
        ("blur", "sigma"),
        ("sharpen", "sharpen_amount"),
        ("amplify", "amplify_factor"),
    ];

    pub const OPERATIONS: [&'static str; 7] = ["scale", "rotate", "translate", "flip", "blur", "sharpen", "amplify"];

    /// Flips take no magnitude; everything else does.
    pub fn takes_value(operation: &str) -> bool {
        operation != "flip"
    }

    pub fn from_parts(operation: &str, parameter_name: &str, value: Option<f64>) -> Result<Self> {
        if !Self::OPERATIONS.contains(&operation) {
            return Err(Error::InvalidParameter(format!(
                "unknown operation `{operation}`; valid operations: {}",
                Self::OPERATIONS.join(", ")
            )));
        }
        if !Self::VOCABULARY.contains(&(operation, parameter_name)) {
            let valid: Vec<&str> = Self::VOCABULARY
                .iter()
                .filter(|(op, _)| *op == operation)
                .map(|(_, p)| *p)
                .collect();
            return Err(Error::InvalidParameter(format!(
                "operation `{operation}` has no parameter `{parameter_name}`; expected one of {}",
                valid.join(", ")
            )));
        }
        let need = |v: Option<f64>| {
            v.ok_or_else(|| Error::InvalidParameter(format!("{operation}/{parameter_name} requires a value")))
        };
        let t = match parameter_name {
            "scale_factor" => Transform::Scale(need(value)?),
            "scale_x" => Transform::ScaleX(need(value)?),
            "angle" => Transform::Rotate(need(value)?),
            "translate_x" => Transform::TranslateX(need(value)?),
            "translate_y" => Transform::TranslateY(need(value)?),
            "flip_horizontal" => Transform::FlipHorizontal,
            "flip_vertical" => Transform::FlipVertical,
            "sigma" => Transform::Blur(need(value)?),
            "sharpen_amount" => Transform::Sharpen(need(value)?),
            "amplify_factor" => Transform::Amplify(need(value)?),
            _ => unreachable!("vocabulary checked above"),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn operation(&self) -> &'static str {
        match self {
            Transform::Scale(_) | Transform::ScaleX(_) => "scale",
            Transform::Rotate(_) => "rotate",
            Transform::TranslateX(_) | Transform::TranslateY(_) => "translate",
            Transform::FlipHorizontal | Transform::FlipVertical => "flip",
            Transform::Blur(_) => "blur",
            Transform::Sharpen(_) => "sharpen",
            Transform::Amplify(_) => "amplify",
        }
    }

    pub fn parameter_name(&self) -> &'static str {
        match self {
            Transform::Scale(_) => "scale_factor",
            Transform::ScaleX(_) => "scale_x",
            Transform::Rotate(_) => "angle",
            Transform::TranslateX(_) => "translate_x",
            Transform::TranslateY(_) => "translate_y",
            Transform::FlipHorizontal => "flip_horizontal",
            Transform::FlipVertical => "flip_vertical",
            Transform::Blur(_) => "sigma",
            Transform::Sharpen(_) => "sharpen_amount",
            Transform::Amplify(_) => "amplify_factor",
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Transform::Scale(v)
            | Transform::ScaleX(v)
            | Transform::Rotate(v)
            | Transform::TranslateX(v)
            | Transform::TranslateY(v)
            | Transform::Blur(v)
            | Transform::Sharpen(v)
            | Transform::Amplify(v) => Some(v),
            Transform::FlipHorizontal | Transform::FlipVertical => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{}: {what}", self.parameter_name())));
        match *self {
            Transform::Scale(v) | Transform::ScaleX(v) if !(v > 0.0 && v.is_finite()) => bad("must be > 0"),
            Transform::Blur(v) | Transform::Sharpen(v) | Transform::Amplify(v) if !(v >= 0.0 && v.is_finite()) => {
                bad("must be >= 0")
            }
            Transform::Rotate(v) | Transform::TranslateX(v) | Transform::TranslateY(v) if !v.is_finite() => {
                bad("must be finite")
            }
            _ => Ok(()),
        }
    }

    /// True when the transform leaves every volume bit-identical.
    pub fn is_identity(&self) -> bool {
        match *self {
            Transform::Scale(v) | Transform::ScaleX(v) | Transform::Amplify(v) => v == 1.0,
            Transform::Rotate(v) | Transform::TranslateX(v) | Transform::TranslateY(v) => v == 0.0,
            Transform::Blur(v) => v < crate::bend_ops::MIN_BLUR_SIGMA,
            Transform::Sharpen(v) => v < crate::bend_ops::MIN_SHARPEN_AMOUNT,
            Transform::FlipHorizontal | Transform::FlipVertical => false,
        }
    }

    pub fn apply(&self, v: &AttentionVolume, pad: PaddingMode) -> Result<AttentionVolume> {
        match *self {
            Transform::Scale(f) => apply_scale(v, f, pad),
            Transform::ScaleX(f) => apply_scale_xy(v, f, 1.0, pad),
            Transform::Rotate(deg) => apply_rotate(v, deg, pad),
            Transform::TranslateX(dx) => apply_translate(v, dx, 0.0, pad),
            Transform::TranslateY(dy) => apply_translate(v, 0.0, dy, pad),
            Transform::FlipHorizontal => Ok(apply_flip(v, FlipAxis::Horizontal)),
            Transform::FlipVertical => Ok(apply_flip(v, FlipAxis::Vertical)),
            Transform::Blur(s) => apply_blur(v, s, pad),
            Transform::Sharpen(a) => apply_sharpen(v, a, pad),
            Transform::Amplify(f) => apply_amplify(v, f),
        }
    }
}

/// Which text tokens a bend touches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum TokenTarget {
    #[default]
    All,
    /// Case-folded words; a token matches when it equals any of them.
    Words(Vec<String>),
}

impl FromStr for TokenTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(TokenTarget::All);
        }
        let words: Vec<String> = s
            .split(',')
            .map(crate::dit::normalize_word)
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::Parse(format!("token target `{s}` lists no words")));
        }
        Ok(TokenTarget::Words(words))
    }
}

impl fmt::Display for TokenTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenTarget::All => f.write_str("ALL"),
            TokenTarget::Words(w) => f.write_str(&w.join(", ")),
        }
    }
}

/// Either every index of a domain or an inclusive span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IndexRange {
    #[default]
    All,
    Span {
        lo: usize,
        hi: usize,
    },
}

impl IndexRange {
    /// Parses `ALL`, `a-b`, or a single index `a`, without bound checks.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(IndexRange::All);
        }
        let number = |text: &str, offset: usize| -> Result<usize> {
            text.trim().parse::<usize>().map_err(|_| {
                Error::Parse(format!(
                    "index range `{spec}`: expected an unsigned integer at position {offset}, found `{}`",
                    text.trim()
                ))
            })
        };
        let (lo, hi) = match s.split_once('-') {
            Some((a, b)) => (number(a, 0)?, number(b, a.len() + 1)?),
            None => {
                let v = number(s, 0)?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(Error::Parse(format!(
                "index range `{spec}`: start {lo} exceeds end {hi}"
            )));
        }
        Ok(IndexRange::Span { lo, hi })
    }

    pub fn check(&self, domain_size: usize) -> Result<()> {
        match *self {
            IndexRange::Span { hi, .. } if hi >= domain_size => Err(Error::Parse(format!(
                "index range `{self}`: end {hi} is outside 0..{domain_size}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        match *self {
            IndexRange::All => true,
            IndexRange::Span { lo, hi } => (lo..=hi).contains(&i),
        }
    }

    pub fn indices(&self, domain_size: usize) -> Vec<usize> {
        (0..domain_size).filter(|&i| self.contains(i)).collect()
    }
}

impl fmt::Display for IndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexRange::All => f.write_str("ALL"),
            IndexRange::Span { lo, hi } => write!(f, "{lo}-{hi}"),
        }
    }
}

/// Parses and bound-checks an index range against a domain of `domain_size` items.
pub fn parse_index_range(spec: &str, domain_size: usize) -> Result<IndexRange> {
    let r = IndexRange::parse(spec)?;
    r.check(domain_size)?;
    Ok(r)
}

/// How explicit token words absent from the prompt are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenMatching {
    /// Any listed word missing from the prompt is an error.
    #[default]
    Strict,
    /// Missing words are skipped; the target is the intersection with the prompt.
    Intersect,
}

/// Indices of tokens selected by `target`; every listed word must occur.
pub fn select_token_indices(tokens: &[String], target: &TokenTarget) -> Result<Vec<usize>> {
    resolve_tokens(tokens, target, TokenMatching::Strict)
}

pub fn resolve_tokens(tokens: &[String], target: &TokenTarget, matching: TokenMatching) -> Result<Vec<usize>> {
    match target {
        TokenTarget::All => Ok((0..tokens.len()).collect()),
        TokenTarget::Words(words) => {
            if matching == TokenMatching::Strict {
                if let Some(missing) = words.iter().find(|w| !tokens.contains(w)) {
                    return Err(Error::TokenNotFound {
                        word: missing.clone(),
                        available: tokens.to_vec(),
                    });
                }
            }
            Ok((0..tokens.len()).filter(|&i| words.contains(&tokens[i])).collect())
        }
    }
}

/// One fully specified bend.
#[derive(Debug, Clone, PartialEq)]
pub struct BendOperation {
    pub transform: Transform,
    pub strength: f64,
    pub padding_mode: PaddingMode,
    pub apply_before_softmax: bool,
    pub renormalize: bool,
    pub token_target: TokenTarget,
    pub timestep_target: IndexRange,
    pub layer_target: IndexRange,
}

impl BendOperation {
    /// A post-softmax bend on all tokens, timesteps, and layers at full strength.
    pub fn new(transform: Transform) -> Self {
        Self {
            transform,
            strength: 1.0,
            padding_mode: PaddingMode::Border,
            apply_before_softmax: false,
            renormalize: false,
            token_target: TokenTarget::All,
            timestep_target: IndexRange::All,
            layer_target: IndexRange::All,
        }
    }

    pub fn validate(&self, model: &ModelConfig, settings: &GenerationSettings) -> Result<()> {
        self.transform.validate()?;
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::InvalidParameter(format!(
                "strength must lie in [0, 1], got {}",
                self.strength
            )));
        }
        self.timestep_target.check(settings.num_timesteps)?;
        self.layer_target.check(model.num_blocks)?;
        Ok(())
    }

    pub fn stage(&self) -> Stage {
        if self.apply_before_softmax {
            Stage::PreSoftmax
        } else {
            Stage::PostSoftmax
        }
    }

    /// Whether a post-bend renormalization happens. Logit bends never renormalize.
    pub fn renormalizes(&self) -> bool {
        self.renormalize && !self.apply_before_softmax
    }

    fn targets(&self, site: &CrossAttentionSite) -> bool {
        self.layer_target.contains(site.layer) && self.timestep_target.contains(site.timestep)
    }

    fn is_noop(&self) -> bool {
        self.strength == 0.0 || self.transform.is_identity()
    }
}

fn check_map(map: &Tensor, site: &CrossAttentionSite) -> Result<(usize, usize)> {
    let (q, k) = map.dims2("bend_map")?;
    let (f, h, w) = site.latent;
    if q != f * h * w {
        return Err(Error::shape(
            "bend_map",
            format!("{q} queries cannot be reshaped to {f}×{h}×{w}"),
        ));
    }
    Ok((q, k))
}

/// Reshape each targeted column to a volume, transform, blend by strength, and
/// write it back; then renormalize rows when the op asks for it.
///
/// Identity transforms, zero strength, and empty token sets return the map untouched.
pub fn bend_map(map: Tensor, op: &BendOperation, site: &CrossAttentionSite, token_indices: &[usize]) -> Result<Tensor> {
    let (q, k) = check_map(&map, site)?;
    if let Some(&bad) = token_indices.iter().find(|&&t| t >= k) {
        return Err(Error::shape(
            "bend_map",
            format!("token index {bad} outside {k} columns"),
        ));
    }
    if op.is_noop() || token_indices.is_empty() {
        return Ok(map);
    }
    let (f, h, w) = site.latent;
    let mut map = map;
    for &col in token_indices {
        let column: Vec<f64> = (0..q).map(|row| map.data()[row * k + col]).collect();
        let original = AttentionVolume::new(f, h, w, column)?;
        let bent = op.transform.apply(&original, op.padding_mode)?;
        let mixed = blend(&original, &bent, op.strength)?;
        let data = map.data_mut();
        for (row, v) in mixed.data().iter().enumerate() {
            data[row * k + col] = *v;
        }
    }
    if op.renormalizes() {
        map = renormalize_rows(&map)?;
    }
    Ok(map)
}

/// Divides every row by its sum.
pub fn renormalize_rows(map: &Tensor) -> Result<Tensor> {
    let c = map.cols();
    let mut out = map.clone();
    for (i, row) in out.data_mut().chunks_exact_mut(c).enumerate() {
        let sum: f64 = row.iter().sum();
        if !(sum > MIN_ROW_SUM) {
            return Err(Error::DegenerateRow { row: i, sum });
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Post-bend attention for one token at one timestep, averaged over heads and recorded layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub token: String,
    pub timestep: usize,
    pub volume: AttentionVolume,
}

/// Accumulates conditional-branch attention volumes for subscribed tokens.
#[derive(Debug, Clone)]
pub struct AttentionRecorder {
    /// `(token, column index)`.
    tokens: Vec<(String, usize)>,
    layers: Vec<bool>,
    latent: (usize, usize, usize),
    /// `sums[t][j]` is the running sum of the volume for `tokens[j]` at timestep `t`.
    sums: Vec<Vec<Vec<f64>>>,
    counts: Vec<usize>,
}

impl AttentionRecorder {
    /// Records `tokens` (matched to the first equal prompt token; unknown ones are
    /// dropped) over the layers in `layers`.
    pub fn new(
        tokens: &[String],
        text: &TextEncoding,
        layers: Vec<bool>,
        latent: (usize, usize, usize),
        timesteps: usize,
    ) -> Self {
        let mut resolved: Vec<(String, usize)> = Vec::new();
        for t in tokens {
            if resolved.iter().any(|(seen, _)| seen == t) {
                continue;
            }
            if let Some(i) = text.tokens.iter().position(|x| x == t) {
                resolved.push((t.clone(), i));
            }
        }
        let q = latent.0 * latent.1 * latent.2;
        Self {
            sums: vec![vec![vec![0.0; q]; resolved.len()]; timesteps],
            counts: vec![0; timesteps],
            tokens: resolved,
            layers,
            latent,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|(t, _)| t.as_str())
    }

    fn record(&mut self, site: &CrossAttentionSite, map: &Tensor) {
        if site.branch != Branch::Conditional
            || !self.layers.get(site.layer).copied().unwrap_or(false)
            || site.timestep >= self.counts.len()
        {
            return;
        }
        let k = map.cols();
        let sums = &mut self.sums[site.timestep];
        for (j, (_, col)) in self.tokens.iter().enumerate() {
            for (row, acc) in sums[j].iter_mut().enumerate() {
                *acc += map.data()[row * k + col];
            }
        }
        self.counts[site.timestep] += 1;
    }

    /// One record per `(timestep, token)`, ordered by timestep then token.
    pub fn finish(self) -> Vec<AttentionRecord> {
        let (f, h, w) = self.latent;
        let mut out = Vec::new();
        for (t, (sums, count)) in self.sums.into_iter().zip(self.counts).enumerate() {
            if count == 0 {
                continue;
            }
            for ((token, _), sum) in self.tokens.iter().zip(sums) {
                let data = sum.into_iter().map(|v| v / count as f64).collect();
                out.push(AttentionRecord {
                    token: token.clone(),
                    timestep: t,
                    volume: AttentionVolume::new(f, h, w, data).expect("recorder geometry is fixed"),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct ResolvedOp {
    op: BendOperation,
    columns: Vec<usize>,
}

/// The interception hook for one generation run.
#[derive(Debug, Clone)]
pub struct BendHook {
    ops: Vec<ResolvedOp>,
    bend_unconditional: bool,
    recorder: Option<AttentionRecorder>,
}

impl BendHook {
    pub fn recorder(&self) -> Option<&AttentionRecorder> {
        self.recorder.as_ref()
    }

    pub fn into_records(self) -> Vec<AttentionRecord> {
        self.recorder.map(AttentionRecorder::finish).unwrap_or_default()
    }
}

impl AttentionHook for BendHook {
    fn intercept(&mut self, stage: Stage, site: &CrossAttentionSite, map: Tensor) -> Result<Tensor> {
        if site.branch == Branch::Unconditional && !self.bend_unconditional {
            return Ok(map);
        }
        let mut map = map;
        for r in &self.ops {
            if r.op.stage() == stage && r.op.targets(site) {
                map = bend_map(map, &r.op, site, &r.columns)?;
            }
        }
        Ok(map)
    }

    fn observe(&mut self, site: &CrossAttentionSite, map: &Tensor) {
        if let Some(rec) = self.recorder.as_mut() {
            rec.record(site, map);
        }
    }
}

/// Tokens recorded by default: the prompt's parenthesized key tokens plus any
/// explicitly targeted words present in the prompt, or every distinct token if
/// that leaves nothing.
pub fn default_record_tokens(prompt: &str, text: &TextEncoding, ops: &[BendOperation]) -> Vec<String> {
    let mut out = crate::dit::key_tokens(prompt);
    for op in ops {
        if let TokenTarget::Words(words) = &op.token_target {
            for w in words {
                if text.tokens.contains(w) && !out.contains(w) {
                    out.push(w.clone());
                }
            }
        }
    }
    if out.is_empty() {
        for t in &text.tokens {
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
    }
    out
}

/// Builds the hook for a run: validates every op against the model and
/// settings, resolves token targets, and subscribes `record_tokens` to a
/// recorder averaging over the union of the ops' layer targets (all layers
/// when there are no ops).
pub fn make_hook(
    ops: &[BendOperation],
    text: &TextEncoding,
    model: &ModelConfig,
    settings: &GenerationSettings,
    matching: TokenMatching,
    record_tokens: Option<&[String]>,
) -> Result<BendHook> {
    let mut resolved = Vec::with_capacity(ops.len());
    for op in ops {
        op.validate(model, settings)?;
        let columns = resolve_tokens(&text.tokens, &op.token_target, matching)?;
        resolved.push(ResolvedOp {
            op: op.clone(),
            columns,
        });
    }
    let recorder = record_tokens.map(|tokens| {
        let layers = (0..model.num_blocks)
            .map(|l| ops.is_empty() || ops.iter().any(|op| op.layer_target.contains(l)))
            .collect();
        AttentionRecorder::new(tokens, text, layers, model.latent_dims(), settings.num_timesteps)
    });
    Ok(BendHook {
        ops: resolved,
        bend_unconditional: settings.bend_unconditional,
        recorder,
    })
}
