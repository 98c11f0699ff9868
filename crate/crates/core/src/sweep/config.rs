// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sweep configuration, in YAML or JSON with identical field names.
//!
//! Sections the toy pipeline does not execute (`memory_settings`,
//! `cfg_schedule_settings`, `prompt_schedule_settings`, `prompt_settings`, …)
//! are kept verbatim so they round-trip into the manifest's config echo.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bend_ops::PaddingMode;
use crate::bender::{IndexRange, TokenTarget, Transform};
use crate::dit::{GenerationSettings, ModelConfig, VideoGeometry};
use crate::error::{Error, Result};

/// Number of blocks a sweep's toy model has unless `toy_model` overrides it.
/// Matches the layer ranges the reference schema targets (`24-29`).
pub const SWEEP_DEFAULT_BLOCKS: usize = 30;

fn default_true() -> bool {
    true
}

fn default_one() -> u32 {
    1
}

fn default_strength() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub batch_name: String,
    pub template: String,
    #[serde(default = "default_one")]
    pub videos_per_variation: u32,
    /// Explicit seed list; overrides `videos_per_variation` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub model_settings: ModelSettings,
    #[serde(default)]
    pub video_settings: VideoSettings,
    pub attention_bending_variations: VariationSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_bending_settings: Option<BendingSettings>,
    /// Toy-model architecture; defaults to [`ModelConfig`] with [`SWEEP_DEFAULT_BLOCKS`] blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy_model: Option<ModelConfig>,
    #[serde(flatten)]
    pub passthrough: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    #[serde(default = "ModelSettings::default_cfg")]
    pub cfg_scale: f64,
    #[serde(default = "ModelSettings::default_seed")]
    pub seed: u64,
    #[serde(default = "ModelSettings::default_steps")]
    pub steps: usize,
    /// Recorded but not used: the toy sampler is a fixed Euler schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ModelSettings {
    fn default_cfg() -> f64 {
        4.5
    }
    fn default_seed() -> u64 {
        41
    }
    fn default_steps() -> usize {
        10
    }
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            cfg_scale: Self::default_cfg(),
            seed: Self::default_seed(),
            steps: Self::default_steps(),
            sampler: None,
            model_id: None,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSettings {
    #[serde(default = "VideoSettings::default_fps")]
    pub fps: u32,
    #[serde(default = "VideoSettings::default_frames")]
    pub frames: usize,
    #[serde(default = "VideoSettings::default_height")]
    pub height: usize,
    #[serde(default = "VideoSettings::default_width")]
    pub width: usize,
    #[serde(default)]
    pub duration: Option<f64>,
}

impl VideoSettings {
    fn default_fps() -> u32 {
        16
    }
    fn default_frames() -> usize {
        25
    }
    fn default_height() -> usize {
        368
    }
    fn default_width() -> usize {
        640
    }
}

impl Default for VideoSettings {
    fn default() -> Self {
        Self {
            fps: Self::default_fps(),
            frames: Self::default_frames(),
            height: Self::default_height(),
            width: Self::default_width(),
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationSettings {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_true")]
    pub generate_baseline: bool,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default)]
    pub operations: Vec<OperationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendingSettings {
    #[serde(default)]
    pub apply_before_softmax: bool,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// One operation axis of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationSpec {
    pub operation: String,
    pub parameter_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_token: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apply_to_timesteps: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apply_to_layers: Option<Vec<String>>,
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding_mode: Option<String>,
}

fn all_or(list: &Option<Vec<String>>) -> Vec<String> {
    match list {
        Some(v) if !v.is_empty() => v.clone(),
        _ => vec!["ALL".to_string()],
    }
}

impl OperationSpec {
    pub fn token_targets(&self) -> Vec<String> {
        all_or(&self.target_token)
    }

    pub fn timestep_targets(&self) -> Vec<String> {
        all_or(&self.apply_to_timesteps)
    }

    pub fn layer_targets(&self) -> Vec<String> {
        all_or(&self.apply_to_layers)
    }

    pub fn padding(&self) -> Result<PaddingMode> {
        self.padding_mode.as_deref().map_or(Ok(PaddingMode::Border), str::parse)
    }

    fn validate(&self, path: &str, num_blocks: usize, steps: usize) -> Result<()> {
        let takes_value = Transform::takes_value(&self.operation);
        let probe = takes_value.then_some(1.0);
        Transform::from_parts(&self.operation, &self.parameter_name, probe)
            .map_err(|e| Error::config(format!("{path}.parameter_name"), e.to_string()))?;
        match (self.range, self.steps) {
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::config(path, "`range` and `steps` must be given together"));
            }
            (Some(_), Some(_)) if !takes_value => {
                return Err(Error::config(format!("{path}.range"), "flip operations take no range"));
            }
            (None, None) if takes_value => {
                return Err(Error::config(
                    format!("{path}.range"),
                    format!("operation `{}` needs `range` and `steps`", self.operation),
                ));
            }
            (_, Some(0)) => return Err(Error::config(format!("{path}.steps"), "steps must be >= 1")),
            _ => {}
        }
        if let (Some([lo, hi]), Some(n)) = (self.range, self.steps) {
            for v in super::linspace(lo, hi, n)? {
                Transform::from_parts(&self.operation, &self.parameter_name, Some(v))
                    .map_err(|e| Error::config(format!("{path}.range"), e.to_string()))?;
            }
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::config(format!("{path}.strength"), "strength must lie in [0, 1]"));
        }
        self.padding()
            .map_err(|e| Error::config(format!("{path}.padding_mode"), e.to_string()))?;
        for (i, t) in self.token_targets().iter().enumerate() {
            t.parse::<TokenTarget>()
                .map_err(|e| Error::config(format!("{path}.target_token[{i}]"), e.to_string()))?;
        }
        for (i, t) in self.timestep_targets().iter().enumerate() {
            IndexRange::parse(t)
                .and_then(|r| r.check(steps))
                .map_err(|e| Error::config(format!("{path}.apply_to_timesteps[{i}]"), e.to_string()))?;
        }
        for (i, t) in self.layer_targets().iter().enumerate() {
            IndexRange::parse(t)
                .and_then(|r| r.check(num_blocks))
                .map_err(|e| Error::config(format!("{path}.apply_to_layers[{i}]"), e.to_string()))?;
        }
        Ok(())
    }
}

fn path_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    Error::config(
        if path.is_empty() { ".".into() } else { path },
        err.into_inner().to_string(),
    )
}

impl SweepConfig {
    /// Parses YAML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let config: SweepConfig = if text.trim_start().starts_with('{') {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(path_error)?
        } else {
            let de = serde_yaml::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(path_error)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn model_config(&self) -> ModelConfig {
        self.toy_model.clone().unwrap_or(ModelConfig {
            num_blocks: SWEEP_DEFAULT_BLOCKS,
            ..ModelConfig::default()
        })
    }

    pub fn apply_before_softmax(&self) -> bool {
        self.attention_bending_settings
            .as_ref()
            .is_some_and(|s| s.apply_before_softmax)
    }

    /// `seeds` when given, else `seed, seed+1, …` for `videos_per_variation` entries.
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.videos_per_variation as u64)
                .map(|i| self.model_settings.seed + i)
                .collect(),
        }
    }

    pub fn generation_settings(&self, seed: u64) -> GenerationSettings {
        let v = &self.video_settings;
        GenerationSettings {
            num_timesteps: self.model_settings.steps,
            cfg_scale: self.model_settings.cfg_scale,
            seed,
            video: VideoGeometry {
                frames: v.frames,
                height: v.height,
                width: v.width,
                fps: v.fps,
            },
            bend_unconditional: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        super::expand_template(&self.template).map_err(|e| Error::config("template", e.to_string()))?;
        if self
            .seeds
            .as_ref()
            .map_or(self.videos_per_variation == 0, Vec::is_empty)
        {
            return Err(Error::config("videos_per_variation", "at least one seed is required"));
        }
        self.model_config()
            .validate()
            .map_err(|e| Error::config("toy_model", e.to_string()))?;
        self.generation_settings(0)
            .validate()
            .map_err(|e| Error::config("model_settings", e.to_string()))?;
        let blocks = self.model_config().num_blocks;
        for (i, op) in self.attention_bending_variations.operations.iter().enumerate() {
            op.validate(
                &format!("attention_bending_variations.operations[{i}]"),
                blocks,
                self.model_settings.steps,
            )?;
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
