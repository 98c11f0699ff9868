// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sweep execution and the `metadata.json` manifest.
//!
//! Output layout under the sweep directory:
//!
//! ```text
//! metadata.json
//! frames/<id>/index.json, frame_0000.ppm, …
//! attn/<id>/index.json, attention.json, <token>/tTT_fFF.pgm, …
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::SweepConfig;
use super::media::{read_json, write_attention_video, write_json, write_video, AttentionStore, ClipIndex};
use super::{expand_variations, VariationRecord};
use crate::bender::TokenMatching;
use crate::dit::{GenerationSettings, ToyDit};
use crate::error::{Error, Result};
use crate::pipeline::generate;

pub const MANIFEST_FILE: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub batch_name: String,
    pub config_echo: Value,
    /// Sorted by `variation_id`.
    pub records: Vec<VariationRecord>,
}

impl Manifest {
    pub fn new(batch_name: String, config_echo: Value, mut records: Vec<VariationRecord>) -> Self {
        records.sort_by(|a, b| a.variation_id.cmp(&b.variation_id));
        Self {
            batch_name,
            config_echo,
            records,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(dir, MANIFEST_FILE, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn find(&self, variation_id: &str) -> Option<&VariationRecord> {
        self.records.iter().find(|r| r.variation_id == variation_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub jobs: usize,
    /// Expand and write the manifest without generating media.
    pub dry_run: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            dry_run: false,
        }
    }
}

/// Generates one record's clip and attention videos under `out_dir`.
pub fn execute_variation(
    model: &ToyDit,
    settings: &GenerationSettings,
    record: &VariationRecord,
    matching: TokenMatching,
    out_dir: &Path,
) -> Result<()> {
    let ops = record.bend_operations()?;
    let run = generate(model, settings, &record.prompt, &ops, matching)?;
    let id = &record.variation_id;
    let frame_paths = write_video(out_dir, &format!("frames/{id}"), &run.video)?;
    let attn_prefix = format!("attn/{id}");
    let attention_index = format!("{attn_prefix}/index.json");
    let mut tokens = Vec::new();
    if !run.attention.is_empty() {
        let index = write_attention_video(out_dir, &attn_prefix, &run.attention)?;
        tokens = index.tokens.iter().map(|t| t.token.clone()).collect();
        write_json(
            out_dir,
            &format!("{attn_prefix}/attention.json"),
            &AttentionStore::from_records(&run.attention)?,
        )?;
    }
    let clip = ClipIndex {
        variation_id: id.clone(),
        fps: run.video.fps,
        frames: run.video.frames,
        height: run.video.height,
        width: run.video.width,
        frame_paths,
        attention_index,
        tokens,
    };
    write_json(out_dir, &record.filename, &clip)
}

fn remove_partial(out_dir: &Path, id: &str) {
    for sub in ["frames", "attn"] {
        let _ = fs::remove_dir_all(out_dir.join(sub).join(id));
    }
}

/// Expands `config`, generates every variation with up to `jobs` in parallel,
/// and writes `metadata.json`. A failed variation keeps its record with an
/// `error` field; the rest of the sweep continues.
pub fn run_sweep(config: &SweepConfig, out_dir: &Path, options: RunOptions) -> Result<Manifest> {
    config.validate()?;
    let records = expand_variations(config)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = if options.dry_run {
        records
    } else {
        let model = ToyDit::new(config.model_config())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            records
                .into_par_iter()
                .map(|mut record| {
                    let settings = config.generation_settings(record.seed);
                    if let Err(e) = execute_variation(&model, &settings, &record, TokenMatching::Intersect, out_dir) {
                        remove_partial(out_dir, &record.variation_id);
                        record.error = Some(e.to_string());
                    }
                    record
                })
                .collect()
        })
    };
    let manifest = Manifest::new(config.batch_name.clone(), config.to_json_value(), records);
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// A single generation written with the sweep layout and a one-record manifest.
/// Token targets must all occur in the prompt.
pub fn run_single(
    model: &ToyDit,
    settings: &GenerationSettings,
    record: VariationRecord,
    out_dir: &Path,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    execute_variation(model, settings, &record, TokenMatching::Strict, out_dir)?;
    let echo = serde_json::json!({
        "model": model.config(),
        "settings": settings,
    });
    let manifest = Manifest::new("generate".into(), echo, vec![record]);
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Re-renders the attention video of one token from a sweep directory into `out_dir`.
/// Returns the written attention index; the token's frames sit under `<out_dir>/<token>/`.
pub fn export_attention(
    manifest_path: &Path,
    variation_id: &str,
    token: &str,
    out_dir: &Path,
) -> Result<super::media::AttentionIndex> {
    let manifest = Manifest::read(manifest_path)?;
    let record = manifest.find(variation_id).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "variation `{variation_id}` is not in {}",
            manifest_path.display()
        ))
    })?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let store_path = root.join(format!("attn/{}/attention.json", record.variation_id));
    let store: AttentionStore = read_json(&store_path)?;
    if !store.volumes.contains_key(token) {
        return Err(Error::TokenNotFound {
            word: token.to_string(),
            available: store.volumes.keys().cloned().collect(),
        });
    }
    let records: Vec<_> = store.to_records()?.into_iter().filter(|r| r.token == token).collect();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_attention_video(out_dir, "", &records)
}
