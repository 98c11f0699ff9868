// SPDX-License-Identifier: MIT OR Apache-2.0

//! One bent generation, end to end.

use crate::bender::{default_record_tokens, make_hook, AttentionRecord, BendOperation, TokenMatching};
use crate::dit::{GenerationSettings, LatentVideo, ToyDit, VideoFrames};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Generation {
    pub latent: LatentVideo,
    pub video: VideoFrames,
    /// Prompt tokens after normalization.
    pub tokens: Vec<String>,
    pub attention: Vec<AttentionRecord>,
}

/// Denoises `prompt` with `ops` active on the conditional branch, decodes the
/// latent, and returns the recorded attention for the default token set.
pub fn generate(
    model: &ToyDit,
    settings: &GenerationSettings,
    prompt: &str,
    ops: &[BendOperation],
    matching: TokenMatching,
) -> Result<Generation> {
    let text = model.encode(prompt)?;
    let record = default_record_tokens(prompt, &text, ops);
    let mut hook = make_hook(ops, &text, model.config(), settings, matching, Some(&record))?;
    let latent = model.denoise(settings, prompt, &mut hook)?;
    let video = model.decode_latent(&latent, &settings.video)?;
    Ok(Generation {
        latent,
        video,
        tokens: text.tokens,
        attention: hook.into_records(),
    })
}
