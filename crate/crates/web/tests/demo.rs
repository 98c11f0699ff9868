// SPDX-License-Identifier: MIT OR Apache-2.0

use attnbend_web::{bend_preview_rgba, count_variations, generation_preview};

#[test]
fn bend_preview_is_side_by_side_rgba() {
    let rgba = bend_preview_rgba("rotate", "angle", 90.0, 1.0, "zeros", 16, 8).unwrap();
    assert_eq!(rgba.len(), 2 * 16 * 8 * 4);
    assert!(rgba.chunks(4).all(|p| p[3] == 255));
}

#[test]
fn zero_strength_preview_repeats_the_original() {
    let rgba = bend_preview_rgba("scale", "scale_factor", 3.0, 0.0, "border", 12, 6).unwrap();
    for row in rgba.chunks(2 * 12 * 4) {
        assert_eq!(row[..48], row[48..]);
    }
    let bent = bend_preview_rgba("scale", "scale_factor", 3.0, 1.0, "border", 12, 6).unwrap();
    assert_ne!(rgba, bent);
}

#[test]
fn flips_need_no_value() {
    assert!(bend_preview_rgba("flip", "flip_vertical", f64::NAN, 1.0, "border", 8, 8).is_ok());
}

#[test]
fn preview_errors_are_messages() {
    let err = bend_preview_rgba("spin", "angle", 1.0, 1.0, "border", 8, 8).unwrap_err();
    assert!(err.contains("valid operations"), "{err}");
    assert!(bend_preview_rgba("blur", "sigma", -1.0, 1.0, "border", 8, 8).is_err());
    assert!(bend_preview_rgba("blur", "sigma", 1.0, 1.0, "mirror", 8, 8).is_err());
    assert!(bend_preview_rgba("blur", "sigma", 1.0, 1.5, "border", 8, 8).is_err());
    assert!(bend_preview_rgba("blur", "sigma", 1.0, 1.0, "border", 0, 8).is_err());
}

#[test]
fn generation_preview_bends_the_frame() {
    let prompt = "a single red (rose) in a glass vase";
    let base = generation_preview(prompt, 41, "none", "", 0.0, 1.0, "ALL", "ALL").unwrap();
    let same = generation_preview(prompt, 41, "scale", "scale_factor", 1.0, 1.0, "ALL", "ALL").unwrap();
    let bent = generation_preview(prompt, 41, "scale", "scale_factor", 3.0, 1.0, "rose", "0-2").unwrap();
    assert_eq!((base.width(), base.height()), (160, 96));
    assert_eq!(base.frame().len(), 160 * 96 * 4);
    assert_eq!(
        base.attention().len(),
        base.attention_width() * base.attention_height() * 4
    );
    assert_eq!(base.token(), "rose");
    assert_eq!(base.frame(), same.frame());
    assert_ne!(base.frame(), bent.frame());
    assert!(generation_preview(prompt, 41, "scale", "scale_factor", 2.0, 1.0, "horse", "ALL").is_err());
}

#[test]
fn counts_sweep_variations() {
    let config = "template: \"[a (rose) | a (horse)]\"\nvideos_per_variation: 3\nattention_bending_variations:\n  operations:\n  - operation: blur\n    parameter_name: sigma\n    range: [0.5, 2.0]\n    steps: 4\n    apply_to_layers: [\"ALL\", \"0-5\"]\n";
    assert_eq!(count_variations(config).unwrap(), [6 * (1 + 8), 6, 2, 3]);
    assert!(count_variations("template: 3\nattention_bending_variations: {operations: [{}]}").is_err());
}
