mod support;

use std::fs;

use flameguide::diffusion::make_linear_schedule;
use flameguide::tensor_io::load_tensor;
use ndarray::{s, Axis};
use serde_json::Value;
use sha2::{Digest, Sha256};
use support::{ok, run, stderr, tree};

#[test]
fn too_few_vertices_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen-test-assets", "--vertices", "3"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!dir.path().join("flameguide-out").exists());
}

#[test]
fn non_empty_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-test-assets", "--vertices", "50", "-o", "a"]);
    let out = run(dir.path(), &["gen-test-assets", "--vertices", "50", "-o", "a", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("--force"));
    ok(dir.path(), &["gen-test-assets", "--vertices", "50", "-o", "a", "--seed", "9", "--force"]);
    let leftovers: Vec<_> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(leftovers, vec!["a".to_string()], "staging directories left behind");
}

#[test]
fn width_mismatch_is_invalid_and_names_both() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-test-assets", "--vertices", "50", "-o", "a"]);
    ok(dir.path(), &["gen-test-assets", "--vertices", "50", "--shape-dim", "7", "-o", "b"]);
    let out = run(dir.path(), &["align", "--identity", "b/identity.jsonl", "--driving", "a/driving.jsonl", "-o", "x"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("identity (7, 10, 15)") && err.contains("driving (20, 10, 15)"), "{err}");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["align", "--identity", "nope.jsonl", "--driving", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("nope.jsonl"));
}

#[test]
fn encode_rejects_incomplete_frames() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-test-assets", "--vertices", "80", "--frames", "2", "--encoder-resolution", "16", "-o", "a"]);
    ok(d, &["render", "--model", "a/model.flmf", "--params", "a/driving.jsonl", "--resolution", "16", "-o", "g"]);
    fs::remove_file(d.join("g/000001_normal.png")).unwrap();
    let out = run(d, &["encode", "--guidance", "g", "--weights", "a/encoder.ggew", "-o", "e"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("normal"));
}

#[test]
fn render_writes_three_maps_per_frame_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-test-assets", "--vertices", "200", "--frames", "2", "-o", "a"]);
    let out = ok(d, &["render", "--model", "a/model.flmf", "--params", "a/driving.jsonl", "--resolution", "32"]);
    let target = d.join("flameguide-out/guidance");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "flameguide-out/guidance");
    let mut names: Vec<String> =
        fs::read_dir(&target).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(
        names,
        [
            "000000_depth.png",
            "000000_normal.png",
            "000000_render.png",
            "000001_depth.png",
            "000001_normal.png",
            "000001_render.png",
            "manifest.json",
        ]
    );

    let manifest: Value = serde_json::from_slice(&fs::read(target.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "render");
    assert_eq!(manifest["config"]["resolution"], 32);
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs[0]["path"], "a/model.flmf");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 6);
    for record in outputs {
        let bytes = fs::read(target.join(record["path"].as_str().unwrap())).unwrap();
        assert_eq!(record["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = support::bin()
        .current_dir(dir.path())
        .env("FLAMEGUIDE_OUT", "elsewhere")
        .args(["gen-test-assets", "--vertices", "20"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("elsewhere/assets/model.flmf").is_file());
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        ok(d, &["gen-test-assets", "--vertices", "120", "--seed", "11", "--encoder-resolution", "32"]);
    }
    assert_eq!(tree(a.path()), tree(b.path()));
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["gen-test-assets", "--vertices", "120", "--seed", "12", "--encoder-resolution", "32"]);
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn fresh_weights_encode_to_zero_and_split_into_windows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-test-assets", "--vertices", "150", "--frames", "5", "--encoder-resolution", "16", "-o", "a"]);
    ok(d, &["render", "--model", "a/model.flmf", "--params", "a/driving.jsonl", "--resolution", "16", "-o", "g"]);
    ok(d, &["encode", "--guidance", "g", "--weights", "a/encoder.ggew", "-o", "e"]);
    let t = load_tensor(d.join("e/guidance.ftns")).unwrap();
    assert_eq!(t.shape(), &[5, 4, 2, 2]);
    assert!(t.iter().all(|&v| v == 0.0));

    ok(d, &["encode", "--guidance", "g", "--seed", "3", "--window", "3", "--overlap", "1", "-o", "w"]);
    let names: Vec<_> = ["window_000.ftns", "window_001.ftns"].iter().map(|n| d.join("w").join(n)).collect();
    assert!(names.iter().all(|p| p.is_file()));
    assert!(!d.join("w/window_002.ftns").exists());
    ok(d, &["stitch", "--windows", "w", "--frames", "5", "--window", "3", "--overlap", "1", "-o", "s"]);
    let stitched = load_tensor(d.join("s/stitched.ftns")).unwrap();
    assert_eq!(stitched.shape(), &[5, 4, 2, 2]);
    let weights: Value = serde_json::from_slice(&fs::read(d.join("s/blend_weights.json")).unwrap()).unwrap();
    assert_eq!(weights.as_array().unwrap().len(), 5);
}

#[test]
fn stitch_window_count_must_match_plan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("w")).unwrap();
    let out = run(d, &["stitch", "--windows", "w", "--frames", "20"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("needs 2 windows, found 0"));
}

#[test]
fn single_step_zero_denoiser_rescales_the_start() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-diffuse", "--steps", "1", "--no-noise", "-o", "z"]);
    let trace = load_tensor(dir.path().join("z/trace.ftns")).unwrap();
    assert_eq!(trace.shape(), &[2, 4, 8, 8]);
    let alpha = make_linear_schedule(1, 1e-4, 0.02).unwrap().alpha(1).unwrap();
    let (start, end) = (trace.index_axis(Axis(0), 0), trace.index_axis(Axis(0), 1));
    // Tensors are stored as f32.
    for (a, b) in start.iter().zip(end.iter()) {
        assert!((b - a / alpha.sqrt()).abs() <= 1e-6 * (1.0 + a.abs()));
    }
}

#[test]
fn teacher_denoiser_recovers_the_planted_latent() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-diffuse", "--denoiser", "teacher", "--steps", "40", "--latent", "2x4x4", "-o", "t"]);
    let trace = load_tensor(dir.path().join("t/trace.ftns")).unwrap();
    let planted = load_tensor(dir.path().join("t/planted.ftns")).unwrap();
    assert_eq!(trace.shape(), &[41, 2, 4, 4]);
    let last = trace.slice(s![40, .., .., ..]);
    for (a, b) in last.iter().zip(planted.iter()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn guidance_latent_shape_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["demo-diffuse", "--steps", "2", "--latent", "2x4x4", "-o", "a"]);
    let out = run(dir.path(), &["demo-diffuse", "--steps", "2", "--guidance", "a/trace.ftns", "-o", "b"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
