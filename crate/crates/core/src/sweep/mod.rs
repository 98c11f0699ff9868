// SPDX-License-Identifier: MIT OR Apache-2.0

//! Combinatorial sweeps over prompts, seeds, operations, magnitudes, and targets.
//!
//! Expansion order is deterministic: prompt, then seed, then the baseline
//! record, then each operation spec in configuration order, and within a spec
//! the product `value × token target × timestep target × layer target` with
//! the value as the outermost axis.

mod config;
pub mod media;
mod run;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bender::{BendOperation, IndexRange, TokenTarget, Transform};
use crate::error::{Error, Result};

pub use config::{
    BendingSettings, ModelSettings, OperationSpec, SweepConfig, VariationSettings, VideoSettings, SWEEP_DEFAULT_BLOCKS,
};
pub use run::{execute_variation, export_attention, run_single, run_sweep, Manifest, RunOptions};

/// Splits a `[a | b | c]` template into prompts; any other string is one prompt.
pub fn expand_template(template: &str) -> Result<Vec<String>> {
    let t = template.trim();
    let inner = match t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
        Some(inner) => inner,
        None => {
            if t.is_empty() {
                return Err(Error::Parse("template is empty".into()));
            }
            return Ok(vec![t.to_string()]);
        }
    };
    inner
        .split('|')
        .enumerate()
        .map(|(i, seg)| {
            let seg = seg.trim();
            if seg.is_empty() {
                Err(Error::Parse(format!("template segment {i} is empty")))
            } else {
                Ok(seg.to_string())
            }
        })
        .collect()
}

/// `steps` evenly spaced values from `lo` to `hi`, both inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("linspace needs at least one step".into()));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last
            }
        })
        .collect())
}

/// The resolved provenance of one generated video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationRecord {
    pub variation_id: String,
    /// Per-variation index, relative to the sweep directory.
    pub filename: String,
    pub prompt: String,
    pub prompt_index: usize,
    pub seed: u64,
    pub baseline: bool,
    /// Position of the originating spec in `operations`.
    pub operation_index: Option<usize>,
    pub operation: Option<String>,
    pub parameter_name: Option<String>,
    pub value: Option<f64>,
    pub strength: Option<f64>,
    pub padding_mode: Option<String>,
    pub target_token: Option<String>,
    pub apply_to_timesteps: Option<String>,
    pub apply_to_layers: Option<String>,
    pub renormalize: Option<bool>,
    pub apply_before_softmax: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VariationRecord {
    pub fn baseline(prompt: &str, prompt_index: usize, seed: u64) -> Self {
        let mut r = Self {
            variation_id: String::new(),
            filename: String::new(),
            prompt: prompt.to_string(),
            prompt_index,
            seed,
            baseline: true,
            operation_index: None,
            operation: None,
            parameter_name: None,
            value: None,
            strength: None,
            padding_mode: None,
            target_token: None,
            apply_to_timesteps: None,
            apply_to_layers: None,
            renormalize: None,
            apply_before_softmax: None,
            error: None,
        };
        r.assign_id();
        r
    }

    /// A bent record built from a fully specified operation.
    pub fn bent(prompt: &str, prompt_index: usize, seed: u64, operation_index: usize, op: &BendOperation) -> Self {
        let mut r = Self::baseline(prompt, prompt_index, seed);
        r.baseline = false;
        r.operation_index = Some(operation_index);
        r.operation = Some(op.transform.operation().to_string());
        r.parameter_name = Some(op.transform.parameter_name().to_string());
        r.value = op.transform.value();
        r.strength = Some(op.strength);
        r.padding_mode = Some(op.padding_mode.to_string());
        r.target_token = Some(op.token_target.to_string());
        r.apply_to_timesteps = Some(op.timestep_target.to_string());
        r.apply_to_layers = Some(op.layer_target.to_string());
        r.renormalize = Some(op.renormalize);
        r.apply_before_softmax = Some(op.apply_before_softmax);
        r.assign_id();
        r
    }

    fn assign_id(&mut self) {
        let identity = serde_json::json!([
            self.prompt,
            self.prompt_index,
            self.seed,
            self.baseline,
            self.operation_index,
            self.operation,
            self.parameter_name,
            self.value,
            self.strength,
            self.padding_mode,
            self.target_token,
            self.apply_to_timesteps,
            self.apply_to_layers,
            self.renormalize,
            self.apply_before_softmax,
        ]);
        let digest = Sha256::digest(identity.to_string().as_bytes());
        self.variation_id = hex::encode(&digest[..8]);
        self.filename = format!("frames/{}/index.json", self.variation_id);
    }

    /// The bends this record describes; empty for a baseline.
    pub fn bend_operations(&self) -> Result<Vec<BendOperation>> {
        if self.baseline {
            return Ok(Vec::new());
        }
        let missing = |f: &str| Error::Parse(format!("record {} lacks `{f}`", self.variation_id));
        let operation = self.operation.as_deref().ok_or_else(|| missing("operation"))?;
        let parameter = self
            .parameter_name
            .as_deref()
            .ok_or_else(|| missing("parameter_name"))?;
        let mut op = BendOperation::new(Transform::from_parts(operation, parameter, self.value)?);
        op.strength = self.strength.unwrap_or(1.0);
        if let Some(p) = &self.padding_mode {
            op.padding_mode = p.parse()?;
        }
        if let Some(t) = &self.target_token {
            op.token_target = t.parse()?;
        }
        if let Some(t) = &self.apply_to_timesteps {
            op.timestep_target = IndexRange::parse(t)?;
        }
        if let Some(l) = &self.apply_to_layers {
            op.layer_target = IndexRange::parse(l)?;
        }
        op.renormalize = self.renormalize.unwrap_or(false);
        op.apply_before_softmax = self.apply_before_softmax.unwrap_or(false);
        Ok(vec![op])
    }
}

/// Every `(value, token, timestep, layer)` combination of one spec, value outermost.
fn spec_operations(spec: &OperationSpec, renormalize: bool, before_softmax: bool) -> Result<Vec<BendOperation>> {
    let values: Vec<Option<f64>> = match (spec.range, spec.steps) {
        (Some([lo, hi]), Some(n)) => linspace(lo, hi, n)?.into_iter().map(Some).collect(),
        _ => vec![None],
    };
    let padding = spec.padding()?;
    let tokens = spec
        .token_targets()
        .iter()
        .map(|t| t.parse::<TokenTarget>())
        .collect::<Result<Vec<_>>>()?;
    let timesteps = spec
        .timestep_targets()
        .iter()
        .map(|t| IndexRange::parse(t))
        .collect::<Result<Vec<_>>>()?;
    let layers = spec
        .layer_targets()
        .iter()
        .map(|t| IndexRange::parse(t))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(values.len() * tokens.len() * timesteps.len() * layers.len());
    for value in &values {
        let transform = Transform::from_parts(&spec.operation, &spec.parameter_name, *value)?;
        for token in &tokens {
            for &timestep in &timesteps {
                for &layer in &layers {
                    out.push(BendOperation {
                        transform,
                        strength: spec.strength,
                        padding_mode: padding,
                        apply_before_softmax: before_softmax,
                        renormalize,
                        token_target: token.clone(),
                        timestep_target: timestep,
                        layer_target: layer,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Expands a configuration into its full, ordered record list.
pub fn expand_variations(config: &SweepConfig) -> Result<Vec<VariationRecord>> {
    let variations = &config.attention_bending_variations;
    if !variations.enabled {
        return Ok(Vec::new());
    }
    let prompts = expand_template(&config.template)?;
    let seeds = config.seed_list();
    let before_softmax = config.apply_before_softmax();
    let per_spec = variations
        .operations
        .iter()
        .map(|s| spec_operations(s, variations.renormalize, before_softmax))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (pi, prompt) in prompts.iter().enumerate() {
        for &seed in &seeds {
            if variations.generate_baseline {
                out.push(VariationRecord::baseline(prompt, pi, seed));
            }
            for (si, ops) in per_spec.iter().enumerate() {
                out.extend(ops.iter().map(|op| VariationRecord::bent(prompt, pi, seed, si, op)));
            }
        }
    }
    Ok(out)
}
