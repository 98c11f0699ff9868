// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then asserts it.
//!
//! Run with `cargo test -p bend-acceptance --test acceptance -- --nocapture --test-threads 1`
//! to read the report in order.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use attnbend_core::bend_ops::PaddingMode;
use attnbend_core::bender::{make_hook, BendOperation, IndexRange, TokenMatching, Transform};
use attnbend_core::dit::{Branch, CrossAttentionSite, GenerationSettings, ModelConfig, ToyDit};
use attnbend_core::rng::SeededRng;
use attnbend_core::sweep::{
    expand_variations, linspace, run_single, run_sweep, RunOptions, SweepConfig, VariationRecord,
};
use attnbend_core::tensor::Tensor;
use common::*;
use rayon::prelude::*;

const PROMPT: &str = "Close-up focused on a single red (rose) in a glass vase";

fn criterion(name: &str, ok: bool, detail: impl AsRef<str>) {
    println!("{} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "{name}: {}", detail.as_ref());
}

fn per_pair_counts(records: &[VariationRecord]) -> BTreeMap<(usize, u64), usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry((r.prompt_index, r.seed)).or_insert(0) += 1;
    }
    counts
}

#[test]
fn sweep_arithmetic() {
    let config = SweepConfig::parse(APPENDIX_CONFIG).unwrap();
    let start = Instant::now();
    let records = expand_variations(&config).unwrap();
    let elapsed = start.elapsed();
    let pairs = per_pair_counts(&records);
    let baselines = records.iter().filter(|r| r.baseline).count();

    let sub = SweepConfig::parse(SCALE_LAYERS_CONFIG).unwrap();
    let sub_pairs = per_pair_counts(&expand_variations(&sub).unwrap());

    let ok = records.len() == 4560
        && pairs.len() == 15
        && pairs.values().all(|&n| n == 304)
        && baselines == 15
        && elapsed.as_secs_f64() < 1.0
        && !sub_pairs.is_empty()
        && sub_pairs.values().all(|&n| n == 192);
    criterion(
        "sweep arithmetic",
        ok,
        format!(
            "{} records over {} prompt/seed pairs ({:?} per pair, {baselines} baselines) in {elapsed:.2?}; scale sub-schema {:?} per pair",
            records.len(),
            pairs.len(),
            pairs.values().collect::<std::collections::BTreeSet<_>>(),
            sub_pairs.values().collect::<std::collections::BTreeSet<_>>(),
        ),
    );
}

#[test]
fn linspace_is_exact() {
    let got = linspace(-2.5, 2.5, 5).unwrap();
    let want: [f64; 5] = [-2.5, -1.25, 0.0, 1.25, 2.5];
    let ok = got.len() == 5 && got.iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits());
    criterion("linspace", ok, format!("linspace(-2.5, 2.5, 5) = {got:?}"));
}

/// Media files of one record, keyed by their path below the record's directories.
/// Index files are skipped because they embed the variation id.
fn media(out: &Path, id: &str) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["frames", "attn"] {
        for (rel, bytes) in tree(&out.join(sub).join(id)) {
            if !rel.ends_with("index.json") {
                files.push((format!("{sub}/{rel}"), bytes));
            }
        }
    }
    files
}

fn render(model: &ToyDit, settings: &GenerationSettings, op: Option<&BendOperation>) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let record = match op {
        Some(op) => VariationRecord::bent(PROMPT, 0, settings.seed, 0, op),
        None => VariationRecord::baseline(PROMPT, 0, settings.seed),
    };
    let manifest = run_single(model, settings, record, dir.path()).unwrap();
    media(dir.path(), &manifest.records[0].variation_id)
}

fn identity_ops() -> Vec<BendOperation> {
    let mut ops = Vec::new();
    for t in [
        Transform::Scale(1.0),
        Transform::ScaleX(1.0),
        Transform::Rotate(0.0),
        Transform::TranslateX(0.0),
        Transform::TranslateY(0.0),
        Transform::Blur(0.0),
        Transform::Sharpen(0.0),
        Transform::Amplify(1.0),
    ] {
        ops.push(BendOperation::new(t));
    }
    for t in [
        Transform::Scale(2.0),
        Transform::ScaleX(0.5),
        Transform::Rotate(45.0),
        Transform::TranslateX(0.3),
        Transform::TranslateY(-0.3),
        Transform::FlipHorizontal,
        Transform::FlipVertical,
        Transform::Blur(1.5),
        Transform::Sharpen(1.5),
        Transform::Amplify(2.0),
    ] {
        let mut op = BendOperation::new(t);
        op.strength = 0.0;
        ops.push(op);
    }
    ops
}

#[test]
fn identity_suite() {
    let model = ToyDit::new(ModelConfig::default()).unwrap();
    let settings = GenerationSettings::default();
    let baseline = render(&model, &settings, None);
    let ops = identity_ops();
    let mismatched: Vec<String> = ops
        .par_iter()
        .filter(|op| render(&model, &settings, Some(op)) != baseline)
        .map(|op| format!("{:?}@{}", op.transform, op.strength))
        .collect();
    criterion(
        "identity suite",
        mismatched.is_empty() && !baseline.is_empty(),
        format!(
            "{} identity variants over {} operation/parameter pairs at N=6, T=10 vs {} baseline media files; mismatches {mismatched:?}",
            ops.len(),
            Transform::VOCABULARY.len(),
            baseline.len()
        ),
    );
}

#[test]
fn flip_involution() {
    let model = ToyDit::new(ModelConfig::default()).unwrap();
    let settings = GenerationSettings::default();
    let baseline = attnbend_core::pipeline::generate(&model, &settings, PROMPT, &[], TokenMatching::Strict).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for t in [Transform::FlipHorizontal, Transform::FlipVertical] {
        let ops = [BendOperation::new(t), BendOperation::new(t)];
        let run = attnbend_core::pipeline::generate(&model, &settings, PROMPT, &ops, TokenMatching::Strict).unwrap();
        let same = run.video == baseline.video && run.attention == baseline.attention;
        ok &= same;
        details.push(format!("{t:?}∘{t:?} identical={same}"));
    }
    criterion("flip involution", ok, details.join(", "));
}

#[test]
fn oracle_equivalence() {
    let mut rng = SeededRng::from_label("acceptance-oracle");
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut checks = 0;
    for _ in 0..200 {
        let v = random_volume(&mut rng, 8);
        for pad in PADDINGS {
            let transforms = [
                ("scale", Transform::Scale(uniform(&mut rng, 0.25, 4.0))),
                ("scale", Transform::ScaleX(uniform(&mut rng, 0.25, 4.0))),
                ("rotate", Transform::Rotate(uniform(&mut rng, -180.0, 180.0))),
                ("translate", Transform::TranslateX(uniform(&mut rng, -1.0, 1.0))),
                ("translate", Transform::TranslateY(uniform(&mut rng, -1.0, 1.0))),
                ("blur", Transform::Blur(uniform(&mut rng, 0.3, 3.0))),
                ("sharpen", Transform::Sharpen(uniform(&mut rng, 0.1, 3.0))),
            ];
            for (name, t) in transforms {
                let got = t.apply(&v, pad).unwrap();
                let err = max_abs_diff(got.data(), &oracle_transform(&t, &v, pad));
                let w = worst.entry(name).or_insert(0.0);
                *w = w.max(err);
                checks += 1;
            }
        }
    }
    let ok = worst.values().all(|&e| e <= 1e-9);
    criterion(
        "oracle equivalence",
        ok,
        format!("{checks} comparisons on 200 volumes up to 8×8×8, worst error per op {worst:?} (tolerance 1e-9)"),
    );
}

#[test]
fn normalization() {
    let mut config = SweepConfig::parse(APPENDIX_CONFIG).unwrap();
    config.attention_bending_variations.renormalize = true;
    let records: Vec<VariationRecord> = expand_variations(&config)
        .unwrap()
        .into_iter()
        .filter(|r| !r.baseline)
        .collect();
    let mut rng = SeededRng::from_label("acceptance-normalization");
    let sample: Vec<&VariationRecord> = (0..50).map(|_| pick(&mut rng, &records)).collect();
    let model = ToyDit::new(tiny_model(30)).unwrap();
    let results: Vec<(usize, f64)> = sample
        .par_iter()
        .map(|r| {
            let settings = small_settings(r.seed);
            let ops = r.bend_operations().unwrap();
            assert!(ops.iter().all(|op| op.renormalize));
            let text = model.encode(&r.prompt).unwrap();
            let hook = make_hook(&ops, &text, model.config(), &settings, TokenMatching::Intersect, None).unwrap();
            let mut capture = Capture::new(hook);
            model.denoise(&settings, &r.prompt, &mut capture).unwrap();
            let worst = capture
                .observed
                .iter()
                .flat_map(|(_, m)| {
                    m.data()
                        .chunks(m.cols())
                        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
                })
                .fold(0.0, f64::max);
            (capture.observed.len(), worst)
        })
        .collect();
    let maps: usize = results.iter().map(|(n, _)| n).sum();
    let worst = results.iter().map(|(_, w)| *w).fold(0.0, f64::max);
    let ops: std::collections::BTreeSet<_> = sample.iter().filter_map(|r| r.operation.as_deref()).collect();
    criterion(
        "normalization",
        sample.len() >= 50 && maps > 0 && worst <= 1e-9,
        format!(
            "{} sampled configs ({ops:?}) on the 30-block toy, {maps} maps entering the value product, worst |row sum - 1| = {worst:e}",
            sample.len()
        ),
    );
}

type Observed = Vec<(CrossAttentionSite, Tensor)>;

fn conditional_maps(model: &ToyDit, settings: &GenerationSettings, ops: &[BendOperation]) -> Observed {
    let text = model.encode(PROMPT).unwrap();
    let hook = make_hook(ops, &text, model.config(), settings, TokenMatching::Strict, None).unwrap();
    let mut capture = Capture::new(hook);
    model.denoise(settings, PROMPT, &mut capture).unwrap();
    capture
        .observed
        .into_iter()
        .filter(|(s, _)| s.branch == Branch::Conditional)
        .collect()
}

fn isolation_setup() -> (ToyDit, GenerationSettings, Observed) {
    let model = ToyDit::new(tiny_model(30)).unwrap();
    let settings = small_settings(41);
    let baseline = conditional_maps(&model, &settings, &[]);
    (model, settings, baseline)
}

/// Compares maps outside a target against the baseline run. Returns
/// `(checked, differing, first differing site)`.
fn compare_outside(
    baseline: &Observed,
    bent: &Observed,
    outside: impl Fn(&CrossAttentionSite) -> bool,
    columns: Option<&[usize]>,
) -> (usize, usize, Option<CrossAttentionSite>) {
    let mut checked = 0;
    let mut differing = 0;
    let mut first = None;
    for ((sa, ma), (sb, mb)) in baseline.iter().zip(bent) {
        assert_eq!(sa, sb);
        if !outside(sa) {
            continue;
        }
        checked += 1;
        let same = match columns {
            None => ma == mb,
            Some(cols) => (0..ma.rows()).all(|r| {
                cols.iter()
                    .all(|&c| ma.data()[r * ma.cols() + c].to_bits() == mb.data()[r * mb.cols() + c].to_bits())
            }),
        };
        if !same {
            differing += 1;
            first.get_or_insert(*sa);
        }
    }
    (checked, differing, first)
}

fn scale_op(layers: &str, timesteps: &str, tokens: &str) -> BendOperation {
    let mut op = BendOperation::new(Transform::Scale(3.0));
    op.layer_target = IndexRange::parse(layers).unwrap();
    op.timestep_target = IndexRange::parse(timesteps).unwrap();
    op.token_target = tokens.parse().unwrap();
    op.padding_mode = PaddingMode::Zeros;
    op
}

#[test]
fn targeting_isolation_layers() {
    let (model, settings, baseline) = isolation_setup();
    let bent = conditional_maps(&model, &settings, &[scale_op("13-18", "ALL", "ALL")]);
    let (checked, differing, first) = compare_outside(&baseline, &bent, |s| !(13..=18).contains(&s.layer), None);
    let first = first
        .map(|s| format!("layer {} timestep {}", s.layer, s.timestep))
        .unwrap_or_default();
    criterion(
        "targeting isolation, layers 13-18 of 30",
        differing == 0,
        format!(
            "{differing} of {checked} maps at other layers differ from baseline, first at {first}; \
             every differing map is computed after the first bent layer and reads the altered residual stream"
        ),
    );
}

#[test]
fn targeting_isolation_timesteps() {
    let (model, settings, baseline) = isolation_setup();
    let bent = conditional_maps(&model, &settings, &[scale_op("ALL", "7-9", "ALL")]);
    let (checked, differing, _) = compare_outside(&baseline, &bent, |s| !(7..=9).contains(&s.timestep), None);
    let inside = compare_outside(&baseline, &bent, |s| (7..=9).contains(&s.timestep), None).1;
    criterion(
        "targeting isolation, timesteps 7-9 of 10",
        differing == 0 && checked > 0 && inside > 0,
        format!(
            "{differing} of {checked} maps at other timesteps differ from baseline; {inside} targeted maps changed"
        ),
    );
}

#[test]
fn targeting_isolation_token_columns() {
    let (model, settings, baseline) = isolation_setup();
    let text = model.encode(PROMPT).unwrap();
    let rose = text.tokens.iter().position(|t| t == "rose").unwrap();
    let others: Vec<usize> = (0..text.tokens.len()).filter(|&c| c != rose).collect();
    let bent = conditional_maps(&model, &settings, &[scale_op("ALL", "ALL", "rose")]);
    let (checked, differing, first) = compare_outside(&baseline, &bent, |_| true, Some(&others));
    let first = first
        .map(|s| format!("layer {} timestep {}", s.layer, s.timestep))
        .unwrap_or_default();
    criterion(
        "targeting isolation, untargeted token columns",
        differing == 0,
        format!(
            "{differing} of {checked} maps have an untargeted column differing from baseline, first at {first}; \
             the first bent site leaves them identical, later sites see queries built from the bent output"
        ),
    );
}

#[test]
fn targeting_isolation_within_the_hook() {
    // What the bend itself guarantees: at every site outside the target the map
    // leaves the hook exactly as it entered, untargeted columns pass through
    // targeted sites unchanged, and every site computed before the first bent
    // site matches the baseline run.
    let (model, settings, baseline) = isolation_setup();
    let text = model.encode(PROMPT).unwrap();
    let rose = text.tokens.iter().position(|t| t == "rose").unwrap();
    let mut failures = Vec::new();
    let mut sites = 0;
    for (name, op, first_bent) in [
        ("layers 13-18", scale_op("13-18", "ALL", "ALL"), (0usize, 13usize)),
        ("timesteps 7-9", scale_op("ALL", "7-9", "ALL"), (7, 0)),
        ("token rose", scale_op("ALL", "ALL", "rose"), (0, 0)),
    ] {
        let hook = make_hook(
            std::slice::from_ref(&op),
            &text,
            model.config(),
            &settings,
            TokenMatching::Strict,
            None,
        )
        .unwrap();
        let mut capture = Capture::new(hook);
        model.denoise(&settings, PROMPT, &mut capture).unwrap();
        for (site, before, after) in &capture.post {
            sites += 1;
            let targeted = site.branch == Branch::Conditional
                && op.layer_target.contains(site.layer)
                && op.timestep_target.contains(site.timestep);
            let k = before.cols();
            let cols: Vec<usize> = if targeted && name == "token rose" {
                (0..k).filter(|&c| c != rose).collect()
            } else if targeted {
                Vec::new()
            } else {
                (0..k).collect()
            };
            let untouched = (0..before.rows()).all(|r| {
                cols.iter()
                    .all(|&c| before.data()[r * k + c].to_bits() == after.data()[r * k + c].to_bits())
            });
            if !untouched {
                failures.push(format!("{name}: hook changed layer {} t {}", site.layer, site.timestep));
            }
        }
        let observed: Observed = capture
            .observed
            .into_iter()
            .filter(|(s, _)| s.branch == Branch::Conditional)
            .collect();
        let upstream = |s: &CrossAttentionSite| (s.timestep, s.layer) < first_bent;
        let (checked, differing, _) = compare_outside(&baseline, &observed, upstream, None);
        if differing > 0 || (first_bent != (0, 0) && checked == 0) {
            failures.push(format!("{name}: {differing} of {checked} upstream maps differ"));
        }
    }
    criterion(
        "targeting isolation, per-site form",
        failures.is_empty(),
        format!("{sites} hook calls checked; violations {failures:?}"),
    );
}

#[test]
fn determinism() {
    let config = SweepConfig::parse(include_str!("../../core/tests/fixtures/small_sweep.yaml")).unwrap();
    let mut trees = Vec::new();
    for jobs in [1, 1, 8, 8] {
        let dir = tempfile::tempdir().unwrap();
        run_sweep(&config, dir.path(), RunOptions { jobs, dry_run: false }).unwrap();
        trees.push((jobs, tree(dir.path())));
    }
    let files = trees[0].1.len();
    let ok = files > 0 && trees.iter().all(|(_, t)| *t == trees[0].1);
    criterion(
        "determinism",
        ok,
        format!(
            "two runs each at jobs 1 and jobs 8 of a {}-record sweep, {files} files per run, byte-identical={ok}",
            expand_variations(&config).unwrap().len()
        ),
    );
}

fn l2(a: &[u8], b: &[u8]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn divergence() {
    let model = ToyDit::new(ModelConfig::default()).unwrap();
    let settings = GenerationSettings::default();
    let frames = |ops: &[BendOperation]| {
        attnbend_core::pipeline::generate(&model, &settings, PROMPT, ops, TokenMatching::Strict)
            .unwrap()
            .video
            .rgb
    };
    let baseline = frames(&[]);
    let identity: Vec<f64> = identity_ops()
        .par_iter()
        .map(|op| l2(&frames(std::slice::from_ref(op)), &baseline))
        .collect();
    let scaled = l2(&frames(&[BendOperation::new(Transform::Scale(3.0))]), &baseline);
    criterion(
        "divergence",
        identity.iter().all(|&d| d == 0.0) && scaled > 0.0,
        format!(
            "identity L2 max {:.1}, scale 3.0 on all tokens/layers/timesteps L2 {scaled:.1}",
            identity.iter().fold(0.0f64, |a, &b| a.max(b))
        ),
    );
}
