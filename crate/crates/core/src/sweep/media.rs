// SPDX-License-Identifier: MIT OR Apache-2.0

//! Media files: binary PPM clips, PGM attention frames, and their JSON indexes.
//!
//! Attention frames scale each token by the largest value it reaches over the
//! whole run, so brightness is comparable across timesteps. Values at or below
//! zero map to black.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bend_ops::AttentionVolume;
use crate::bender::AttentionRecord;
use crate::dit::VideoFrames;
use crate::error::{Error, Result};

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

/// Parses a binary PPM or PGM written by this module into `(magic, width, height, pixels)`.
pub fn decode_pnm(bytes: &[u8]) -> Result<(String, usize, usize, Vec<u8>)> {
    let bad = || Error::Parse("malformed PNM header".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    let body = bytes.get(pos + 1..).ok_or_else(bad)?.to_vec();
    let width = fields[1].parse().map_err(|_| bad())?;
    let height = fields[2].parse().map_err(|_| bad())?;
    Ok((fields[0].clone(), width, height, body))
}

pub(crate) fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub(crate) fn write_json<T: Serialize>(root: &Path, rel: &str, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(root, rel, &bytes)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn join_rel(prefix: &str, rest: &str) -> String {
    if prefix.is_empty() || prefix == "." {
        rest.to_string()
    } else {
        format!("{prefix}/{rest}")
    }
}

/// Makes a token safe to use as a directory name.
pub fn token_dir(token: &str) -> String {
    let s: String = token
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// Writes every frame as `<prefix>/frame_NNNN.ppm`; returns the relative paths.
pub fn write_video(root: &Path, prefix: &str, video: &VideoFrames) -> Result<Vec<String>> {
    (0..video.frames)
        .map(|i| {
            let rel = format!("{prefix}/frame_{i:04}.ppm");
            write_file(root, &rel, &encode_ppm(video.width, video.height, video.frame(i)))?;
            Ok(rel)
        })
        .collect()
}

/// Per-variation clip index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipIndex {
    pub variation_id: String,
    pub fps: u32,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub frame_paths: Vec<String>,
    pub attention_index: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFrames {
    pub token: String,
    pub dir: String,
    /// `files[t][f]` is frame `f` at timestep `t`.
    pub files: Vec<Vec<String>>,
}

/// Index of a rendered attention-video set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionIndex {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub timesteps: Vec<usize>,
    pub tokens: Vec<TokenFrames>,
}

/// Raw recorded volumes, kept so attention videos can be re-rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionStore {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// `volumes[token]` holds `(timestep, flattened volume)` pairs in timestep order.
    pub volumes: BTreeMap<String, Vec<(usize, Vec<f64>)>>,
}

impl AttentionStore {
    pub fn from_records(records: &[AttentionRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidParameter("no attention records".into()))?;
        let (frames, height, width) = first.volume.dims();
        let mut volumes: BTreeMap<String, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
        for r in records {
            if r.volume.dims() != (frames, height, width) {
                return Err(Error::shape(
                    "attention records",
                    format!("{:?} vs {:?}", r.volume.dims(), (frames, height, width)),
                ));
            }
            volumes
                .entry(r.token.clone())
                .or_default()
                .push((r.timestep, r.volume.data().to_vec()));
        }
        for seq in volumes.values_mut() {
            seq.sort_by_key(|(t, _)| *t);
        }
        Ok(Self {
            frames,
            height,
            width,
            volumes,
        })
    }

    pub fn to_records(&self) -> Result<Vec<AttentionRecord>> {
        let mut out = Vec::new();
        for (token, seq) in &self.volumes {
            for (t, data) in seq {
                out.push(AttentionRecord {
                    token: token.clone(),
                    timestep: *t,
                    volume: AttentionVolume::new(self.frames, self.height, self.width, data.clone())?,
                });
            }
        }
        Ok(out)
    }
}

fn quantize(v: f64, max: f64) -> u8 {
    if max <= 0.0 {
        return 0;
    }
    (v / max * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Renders records as `<prefix>/<token>/tTT_fFF.pgm` plus `<prefix>/index.json`.
pub fn write_attention_video(root: &Path, prefix: &str, records: &[AttentionRecord]) -> Result<AttentionIndex> {
    let store = AttentionStore::from_records(records)?;
    let (frames, height, width) = (store.frames, store.height, store.width);
    let plane = height * width;
    let mut timesteps: Vec<usize> = records.iter().map(|r| r.timestep).collect();
    timesteps.sort_unstable();
    timesteps.dedup();
    let mut tokens = Vec::new();
    for (token, seq) in &store.volumes {
        let max = seq
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        let dir = join_rel(prefix, &token_dir(token));
        let mut files = Vec::with_capacity(seq.len());
        for (t, data) in seq {
            let mut per_t = Vec::with_capacity(frames);
            for f in 0..frames {
                let gray: Vec<u8> = data[f * plane..(f + 1) * plane]
                    .iter()
                    .map(|&v| quantize(v, max))
                    .collect();
                let rel = format!("{dir}/t{t:02}_f{f:02}.pgm");
                write_file(root, &rel, &encode_pgm(width, height, &gray))?;
                per_t.push(rel);
            }
            files.push(per_t);
        }
        tokens.push(TokenFrames {
            token: token.clone(),
            dir,
            files,
        });
    }
    let index = AttentionIndex {
        frames,
        height,
        width,
        timesteps,
        tokens,
    };
    write_json(root, &join_rel(prefix, "index.json"), &index)?;
    Ok(index)
}
