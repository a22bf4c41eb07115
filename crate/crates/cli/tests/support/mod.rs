//! Helpers for driving the `flameguide` binary from tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flameguide"));
    cmd.env_remove("FLAMEGUIDE_OUT");
    cmd
}

/// Runs the tool in `cwd`, returning its raw output.
pub fn run(cwd: &Path, args: &[&str]) -> Output {
    bin().current_dir(cwd).args(args).output().expect("spawn flameguide")
}

/// Runs the tool and panics with its stderr unless it succeeds.
pub fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = run(cwd, args);
    assert!(
        out.status.success(),
        "flameguide {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file under `root`, keyed by its `/`-joined relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let key = if prefix.is_empty() { name } else { format!("{prefix}/{name}") };
            if path.is_dir() {
                walk(&path, &key, out);
            } else {
                out.insert(key, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, "", &mut out);
    out
}

/// gen-test-assets → align → render → encode (windowed) → stitch, all with
/// relative paths inside `root`.
pub fn pipeline(root: &Path, frames: usize, resolution: usize, jobs: usize) {
    let (frames_s, res_s, jobs_s) = (frames.to_string(), resolution.to_string(), jobs.to_string());
    ok(root, &["gen-test-assets", "--frames", &frames_s, "--encoder-resolution", &res_s, "-o", "assets"]);
    ok(root, &["align", "--identity", "assets/identity.jsonl", "--driving", "assets/driving.jsonl", "-o", "aligned"]);
    ok(
        root,
        &[
            "render",
            "--model",
            "assets/model.flmf",
            "--params",
            "aligned/aligned.jsonl",
            "--resolution",
            &res_s,
            "--jobs",
            &jobs_s,
            "-o",
            "guidance",
        ],
    );
    ok(
        root,
        &[
            "encode",
            "--guidance",
            "guidance",
            "--weights",
            "assets/encoder.ggew",
            "--window",
            "8",
            "--overlap",
            "4",
            "--jobs",
            &jobs_s,
            "-o",
            "encoded",
        ],
    );
    ok(
        root,
        &["stitch", "--windows", "encoded", "--frames", &frames_s, "--window", "8", "--overlap", "4", "-o", "stitched"],
    );
}
