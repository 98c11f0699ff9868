// SPDX-License-Identifier: MIT OR Apache-2.0

//! `attnbend`: single bent generations, sweeps, expansion, and attention export.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use attnbend_core::bend_ops::PaddingMode;
use attnbend_core::bender::{BendOperation, IndexRange, Transform};
use attnbend_core::dit::{GenerationSettings, ModelConfig, ToyDit, VideoGeometry};
use attnbend_core::sweep::{
    expand_variations, export_attention, run_single, run_sweep, Manifest, RunOptions, SweepConfig, VariationRecord,
};
use attnbend_core::Error;
use clap::{Args, Parser, Subcommand};

const SEED_ENV: &str = "ATTNBEND_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "attnbend",
    version,
    about = "Bend cross-attention maps of a toy video diffusion transformer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one clip, optionally with a single bend.
    Generate(GenerateArgs),
    /// Run every variation of a sweep configuration.
    Sweep(SweepArgs),
    /// Expand a sweep configuration and report the variation count.
    Expand(ExpandArgs),
    /// Re-render one token's attention video from a sweep directory.
    ExportAttn(ExportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    prompt: String,
    /// Noise seed. Falls back to ATTNBEND_SEED, then 41.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    /// Operation: scale, rotate, translate, flip, blur, sharpen, amplify.
    #[arg(long)]
    op: Option<String>,
    /// Parameter name; inferred when the operation has only one.
    #[arg(long)]
    param: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    value: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long, default_value = "border")]
    pad: String,
    /// `ALL` or a comma-separated word list.
    #[arg(long, default_value = "ALL")]
    tokens: String,
    /// `ALL` or an inclusive range `a-b`.
    #[arg(long, default_value = "ALL")]
    timesteps: String,
    #[arg(long, default_value = "ALL")]
    layers: String,
    #[arg(long)]
    pre_softmax: bool,
    #[arg(long)]
    renormalize: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 4.5)]
    cfg_scale: f64,
    /// Number of transformer blocks in the toy model.
    #[arg(long, default_value_t = ModelConfig::default().num_blocks)]
    blocks: usize,
    #[arg(long, default_value_t = 25)]
    frames: usize,
    #[arg(long, default_value_t = 368)]
    height: usize,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    fps: u32,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the manifest without generating media.
    #[arg(long)]
    dry_run: bool,
    /// Base seed. Overrides ATTNBEND_SEED, which overrides model_settings.seed.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExpandArgs {
    #[arg(long)]
    config: PathBuf,
    /// Also write metadata.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Path to a sweep's metadata.json.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    variation_id: String,
    #[arg(long)]
    token: String,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn infer_param(op: &str) -> Result<&'static str, Failure> {
    let candidates: Vec<&'static str> = Transform::VOCABULARY
        .iter()
        .filter(|(o, _)| *o == op)
        .map(|(_, p)| *p)
        .collect();
    match (op, candidates.as_slice()) {
        ("scale", _) => Ok("scale_factor"),
        (_, [only]) => Ok(only),
        (_, []) => Err(Failure::Usage(format!(
            "unknown operation `{op}`; valid operations: {}",
            Transform::OPERATIONS.join(", ")
        ))),
        (_, many) => Err(Failure::Usage(format!(
            "operation `{op}` needs --param, one of {}",
            many.join(", ")
        ))),
    }
}

fn bend_from_args(args: &GenerateArgs) -> Result<Option<BendOperation>, Failure> {
    let Some(op) = args.op.as_deref() else {
        return Ok(None);
    };
    let param = match args.param.as_deref() {
        Some(p) => p,
        None => infer_param(op)?,
    };
    let transform = Transform::from_parts(op, param, args.value).map_err(usage)?;
    let mut bend = BendOperation::new(transform);
    bend.strength = args.strength;
    bend.padding_mode = args.pad.parse::<PaddingMode>().map_err(usage)?;
    bend.token_target = args.tokens.parse().map_err(usage)?;
    bend.timestep_target = IndexRange::parse(&args.timesteps).map_err(usage)?;
    bend.layer_target = IndexRange::parse(&args.layers).map_err(usage)?;
    bend.apply_before_softmax = args.pre_softmax;
    bend.renormalize = args.renormalize;
    Ok(Some(bend))
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let model_cfg = ModelConfig {
        num_blocks: args.blocks,
        ..ModelConfig::default()
    };
    let settings = GenerationSettings {
        num_timesteps: args.steps,
        cfg_scale: args.cfg_scale,
        seed: args.seed.unwrap_or(41),
        video: VideoGeometry {
            frames: args.frames,
            height: args.height,
            width: args.width,
            fps: args.fps,
        },
        bend_unconditional: false,
    };
    settings.validate().map_err(usage)?;
    let bend = bend_from_args(&args)?;
    if let Some(b) = &bend {
        b.validate(&model_cfg, &settings).map_err(usage)?;
    }
    let model = ToyDit::new(model_cfg).map_err(usage)?;
    let record = match &bend {
        Some(b) => VariationRecord::bent(&args.prompt, 0, settings.seed, 0, b),
        None => VariationRecord::baseline(&args.prompt, 0, settings.seed),
    };
    let manifest = run_single(&model, &settings, record, &args.out)?;
    let r = &manifest.records[0];
    println!("{} -> {}", r.variation_id, args.out.join(&r.filename).display());
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SweepConfig, Failure> {
    let mut config = SweepConfig::load(path).map_err(usage)?;
    if let Some(seed) = seed {
        config.model_settings.seed = seed;
    }
    Ok(config)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let config = load_config(&args.config, args.seed)?;
    let start = Instant::now();
    let manifest = run_sweep(
        &config,
        &args.out,
        RunOptions {
            jobs: args.jobs,
            dry_run: args.dry_run,
        },
    )?;
    let failed = manifest.records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} variations ({} failed) in {:.2?} -> {}",
        manifest.records.len(),
        failed,
        start.elapsed(),
        args.out.join("metadata.json").display()
    );
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} variations failed; see the error fields in metadata.json"
        )));
    }
    Ok(())
}

fn cmd_expand(args: ExpandArgs) -> Result<(), Failure> {
    let config = load_config(&args.config, args.seed)?;
    let start = Instant::now();
    let records = expand_variations(&config).map_err(usage)?;
    let elapsed = start.elapsed();
    let baselines = records.iter().filter(|r| r.baseline).count();
    if let Some(out) = &args.out {
        Manifest::new(config.batch_name.clone(), config.to_json_value(), records.clone()).write(out)?;
    }
    println!(
        "{} variations ({} baseline, {} bent) expanded in {:.2?}",
        records.len(),
        baselines,
        records.len() - baselines,
        elapsed
    );
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<(), Failure> {
    let index = export_attention(&args.manifest, &args.variation_id, &args.token, &args.out).map_err(usage)?;
    let files: usize = index.tokens.iter().flat_map(|t| &t.files).map(Vec::len).sum();
    println!("{files} frames -> {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Expand(a) => cmd_expand(a),
        Command::ExportAttn(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
