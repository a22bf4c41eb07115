use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use flameguide::assets::{
    generate_test_model, load_model, load_sequence, random_params, random_sequence, save_model, save_sequence,
};
use flameguide::diffusion::{
    gaussian_latent, make_linear_schedule, q_sample, sample_trace, Denoiser, LatentState, SamplerOptions,
    TeacherForced, ZeroDenoiser,
};
use flameguide::encoder::{load_weights, save_weights, EncoderWeights, FeatureMap, FeatureTag, GgeConfig};
use flameguide::raster::io::{load_png_channels, save_guidance, KINDS};
use flameguide::raster::{render_sequence, DepthRange};
use flameguide::stitch::{blend, plan_windows};
use flameguide::tensor_io::{load_tensor, save_tensor};
use flameguide::{align as align_sequence, Camera, FlameParams, ParamSequence};
use ndarray::{ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::staging::Staged;
use crate::OutputArgs;

fn with_jobs<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(work))
}

fn finish(stage: Staged, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
    manifest.collect_outputs(stage.path())?;
    manifest.write(stage.path())?;
    stage.commit()
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Vertex count of the synthetic head (at least 4).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(4..))]
    vertices: u64,
    /// Articulated joints below the root.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    joints: u64,
    #[arg(long, default_value_t = 20)]
    shape_dim: usize,
    #[arg(long, default_value_t = 10)]
    expression_dim: usize,
    /// Frames in the sample driving sequence.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    frames: u64,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    /// Square input resolution the encoder weights are built for.
    #[arg(long, default_value_t = 512)]
    encoder_resolution: usize,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn gen_test_assets(root: &Path, args: GenArgs) -> Result<PathBuf, CliError> {
    let target = args.output.resolve(root, "assets");
    let (n, k) = (args.vertices as usize, args.joints as usize);
    let model = generate_test_model(args.seed, n, k, (args.shape_dim, args.expression_dim))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let identity = ParamSequence::new(vec![random_params(&model, &mut rng, 0.0)], args.fps)?;
    let driving = random_sequence(&model, args.seed.wrapping_add(2), args.frames as usize, args.fps)?;
    let weights = EncoderWeights::init(&GgeConfig::with_resolution(args.encoder_resolution), args.seed)?;

    let stage = Staged::new(target, args.output.force)?;
    save_model(&model, stage.path().join("model.flmf"))?;
    save_sequence(&identity, stage.path().join("identity.jsonl"))?;
    save_sequence(&driving, stage.path().join("driving.jsonl"))?;
    save_weights(&weights, stage.path().join("encoder.ggew"))?;
    let manifest = RunManifest::new(
        "gen-test-assets",
        json!({
            "seed": args.seed,
            "vertices": n,
            "joints": k,
            "shape_dim": args.shape_dim,
            "expression_dim": args.expression_dim,
            "frames": args.frames,
            "fps": args.fps,
            "encoder_resolution": args.encoder_resolution,
        }),
    );
    finish(stage, manifest)
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Parameter file whose shape coefficients define the identity.
    #[arg(long)]
    identity: PathBuf,
    /// Which frame of the identity file to take the shape from.
    #[arg(long, default_value_t = 0)]
    identity_frame: usize,
    /// Driving parameter sequence supplying expression and pose.
    #[arg(long)]
    driving: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn align(root: &Path, args: AlignArgs) -> Result<PathBuf, CliError> {
    let target = args.output.resolve(root, "aligned");
    let identity_seq = load_sequence(&args.identity)?;
    let identity: &FlameParams = identity_seq.frames.get(args.identity_frame).ok_or_else(|| {
        CliError::Invalid(format!(
            "identity frame {} requested but {} has {} frames",
            args.identity_frame,
            args.identity.display(),
            identity_seq.len()
        ))
    })?;
    let driving = load_sequence(&args.driving)?;
    let aligned = align_sequence(identity, &driving)?;

    let stage = Staged::new(target, args.output.force)?;
    save_sequence(&aligned.frames, stage.path().join("aligned.jsonl"))?;
    let mut manifest = RunManifest::new("align", json!({ "identity_frame": args.identity_frame }));
    manifest.add_input("identity", &args.identity)?;
    manifest.add_input("driving", &args.driving)?;
    finish(stage, manifest)
}

fn parse_camera(text: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [s, tx, ty] = parts.as_slice() else {
        return Err(format!("expected scale,tx,ty but got {text:?}"));
    };
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(s)?, num(tx)?, num(ty)?))
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    model: PathBuf,
    /// Parameter sequence to render (usually the aligned output).
    #[arg(long)]
    params: PathBuf,
    /// Weak-perspective camera as scale,tx,ty.
    #[arg(long, default_value = "1,0,0", value_parser = parse_camera)]
    camera: (f64, f64, f64),
    /// Square image size in pixels.
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u64).range(1..))]
    resolution: u64,
    /// Nearest view distance mapped to full depth brightness.
    #[arg(long, default_value_t = -1.5, allow_negative_numbers = true)]
    near: f64,
    /// Farthest view distance still above the depth floor.
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    far: f64,
    /// Worker threads (0 = one per core). Never changes the output.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn render(root: &Path, args: RenderArgs) -> Result<PathBuf, CliError> {
    let target = args.output.resolve(root, "guidance");
    let model = load_model(&args.model)?;
    let params = load_sequence(&args.params)?;
    for (i, frame) in params.frames.iter().enumerate() {
        frame
            .check_against(&model)
            .map_err(|e| CliError::Invalid(format!("frame {i} of {}: {e}", args.params.display())))?;
    }
    let size = args.resolution as usize;
    let (scale, tx, ty) = args.camera;
    let camera = Camera::new(scale, tx, ty, size, size)?;
    let range = DepthRange::new(args.near, args.far)?;
    // Rendering takes the sequence as given; alignment is a separate step.
    let seq = flameguide::AlignedSequence {
        identity_shape: params.frames.first().map(|f| f.shape.clone()).unwrap_or_default(),
        frames: params,
    };

    let stage = Staged::new(target, args.output.force)?;
    let dir = stage.path().to_path_buf();
    with_jobs(args.jobs, || -> Result<(), CliError> {
        let maps = render_sequence(&model, &seq, &camera, range)?;
        maps.par_iter().enumerate().try_for_each(|(i, m)| save_guidance(m, &dir, i).map(|_| ()))?;
        Ok(())
    })??;

    let mut manifest = RunManifest::new(
        "render",
        json!({
            "camera": { "scale": scale, "tx": tx, "ty": ty },
            "resolution": size,
            "depth_range": { "near": range.near, "far": range.far },
            "frames": seq.len(),
        }),
    );
    manifest.add_input("model", &args.model)?;
    manifest.add_input("params", &args.params)?;
    finish(stage, manifest)
}

/// Frame index → (kind → path) for every `NNNNNN_kind.png` in `dir`.
fn scan_guidance(dir: &Path) -> Result<Vec<BTreeMap<&'static str, PathBuf>>, CliError> {
    let mut frames: BTreeMap<usize, BTreeMap<&'static str, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(stem) = name.strip_suffix(".png") else { continue };
        let Some((index, kind)) = stem.split_once('_') else { continue };
        let (Ok(index), Some(kind)) = (index.parse::<usize>(), KINDS.iter().find(|k| **k == kind)) else {
            continue;
        };
        frames.entry(index).or_default().insert(kind, path);
    }
    if frames.is_empty() {
        return Err(CliError::Invalid(format!("no guidance maps found in {}", dir.display())));
    }
    let count = frames.len();
    let mut out = Vec::with_capacity(count);
    for (expected, (index, kinds)) in frames.into_iter().enumerate() {
        if index != expected {
            return Err(CliError::Invalid(format!("guidance frames are not contiguous: frame {expected} is missing")));
        }
        if kinds.len() != KINDS.len() {
            let missing: Vec<_> = KINDS.iter().filter(|k| !kinds.contains_key(*k)).collect();
            return Err(CliError::Invalid(format!(
                "frame {index} has {} of {} guidance maps (missing {missing:?})",
                kinds.len(),
                KINDS.len()
            )));
        }
        out.push(kinds);
    }
    Ok(out)
}

fn load_frame_features(kinds: &BTreeMap<&'static str, PathBuf>) -> Result<Vec<FeatureMap>, CliError> {
    FeatureTag::GUIDANCE_KINDS
        .iter()
        .map(|&tag| {
            let data = load_png_channels(&kinds[tag.to_string().as_str()])?;
            Ok(FeatureMap::new(data, tag)?)
        })
        .collect()
}

fn stack(frames: &[ArrayD<f64>]) -> ArrayD<f64> {
    let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
    ndarray::stack(Axis(0), &views).expect("frames share one shape")
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory of rendered guidance PNGs.
    #[arg(long)]
    guidance: PathBuf,
    /// Encoder weight file; without it, fresh weights are built from --seed.
    #[arg(long, conflicts_with = "seed")]
    weights: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also split the encoded sequence into windows of this many frames.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 0, requires = "window")]
    overlap: usize,
    /// Worker threads (0 = one per core). Never changes the output.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn encode(root: &Path, args: EncodeArgs) -> Result<PathBuf, CliError> {
    let target = args.output.resolve(root, "encoded");
    let frames = scan_guidance(&args.guidance)?;
    let first = load_frame_features(&frames[0])?;
    let (_, h, w) = first[0].shape();
    let weights = match &args.weights {
        Some(path) => load_weights(path)?,
        None => {
            let config = GgeConfig { input_height: h, input_width: w, ..GgeConfig::default() };
            EncoderWeights::init(&config, args.seed.unwrap_or(0))?
        }
    };
    let plan = args.window.map(|win| plan_windows(frames.len(), win, args.overlap)).transpose()?;

    let encoded = with_jobs(args.jobs, || {
        frames
            .par_iter()
            .map(|kinds| {
                let features = load_frame_features(kinds)?;
                Ok(weights.encode(&features)?.data.into_dyn())
            })
            .collect::<Result<Vec<_>, CliError>>()
    })??;

    let stage = Staged::new(target, args.output.force)?;
    match &plan {
        None => save_tensor(&stack(&encoded), stage.path().join("guidance.ftns"))?,
        Some(plan) => {
            for (j, range) in plan.ranges().enumerate() {
                save_tensor(&stack(&encoded[range]), stage.path().join(format!("window_{j:03}.ftns")))?;
            }
        }
    }
    let mut manifest = RunManifest::new(
        "encode",
        json!({
            "frames": frames.len(),
            "weights_seed": if args.weights.is_some() { None } else { Some(args.seed.unwrap_or(0)) },
            "window": plan.as_ref().map(|p| json!({ "length": p.window_length, "overlap": p.overlap, "starts": p.starts })),
        }),
    );
    for (i, kinds) in frames.iter().enumerate() {
        for (kind, path) in kinds {
            manifest.add_input(&format!("frame {i} {kind}"), path)?;
        }
    }
    if let Some(path) = &args.weights {
        manifest.add_input("weights", path)?;
    }
    finish(stage, manifest)
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Directory of window_NNN.ftns tensors (frame axis first).
    #[arg(long)]
    windows: PathBuf,
    /// Length of the stitched sequence.
    #[arg(long)]
    frames: usize,
    #[arg(long, default_value_t = flameguide::stitch::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 4)]
    overlap: usize,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn stitch(root: &Path, args: StitchArgs) -> Result<PathBuf, CliError> {
    let target = args.output.resolve(root, "stitched");
    let plan = plan_windows(args.frames, args.window, args.overlap)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.windows)
        .map_err(|e| CliError::io(&args.windows, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("window_") && n.ends_with(".ftns"))
        })
        .collect();
    paths.sort();
    if paths.len() != plan.len() {
        return Err(CliError::Invalid(format!(
            "plan for {} frames (window {}, overlap {}) needs {} windows, found {} in {}",
            args.frames,
            args.window,
            args.overlap,
            plan.len(),
            paths.len(),
            args.windows.display()
        )));
    }
    let windows = paths.iter().map(load_tensor).collect::<Result<Vec<_>, _>>()?;
    let blended = blend(&windows, &plan)?;

    let stage = Staged::new(target, args.output.force)?;
    save_tensor(&blended.frames, stage.path().join("stitched.ftns"))?;
    let weights_path = stage.path().join("blend_weights.json");
    let text = serde_json::to_string(&blended.weights).expect("weights serialize") + "\n";
    fs::write(&weights_path, text).map_err(|e| CliError::io(&weights_path, e))?;
    let mut manifest = RunManifest::new(
        "stitch",
        json!({ "frames": args.frames, "window": args.window, "overlap": args.overlap, "starts": plan.starts }),
    );
    for path in &paths {
        manifest.add_input("window", path)?;
    }
    finish(stage, manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenoiserKind {
    /// Predicts zero noise.
    Zero,
    /// Knows a planted clean latent and predicts the exact noise.
    Teacher,
}

fn parse_latent(text: &str) -> Result<(usize, usize, usize), String> {
    let dims: Vec<usize> = text
        .split([',', 'x'])
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match dims.as_slice() {
        &[c, h, w] if c > 0 && h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(format!("expected three positive sizes like 4x8x8, got {text:?}")),
    }
}

#[derive(Debug, Args)]
pub struct DiffuseArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.02)]
    beta_end: f64,
    /// Latent size as CxHxW.
    #[arg(long, default_value = "4x8x8", value_parser = parse_latent)]
    latent: (usize, usize, usize),
    #[arg(long, value_enum, default_value_t = DenoiserKind::Zero)]
    denoiser: DenoiserKind,
    /// Skip the noise added between reverse steps.
    #[arg(long)]
    no_noise: bool,
    /// Guidance tensor added to the latent before every denoiser call.
    #[arg(long)]
    guidance: Option<PathBuf>,
    /// Frame of a multi-frame guidance tensor to use.
    #[arg(long, default_value_t = 0, requires = "guidance")]
    guidance_frame: usize,
    #[command(flatten)]
    output: OutputArgs,
}

fn guidance_latent(path: &Path, frame: usize, shape: (usize, usize, usize)) -> Result<FeatureMap, CliError> {
    let tensor = load_tensor(path)?;
    let tensor = match tensor.ndim() {
        3 => tensor,
        4 if frame < tensor.shape()[0] => tensor.index_axis(Axis(0), frame).to_owned(),
        _ => {
            return Err(CliError::Invalid(format!(
                "guidance tensor {} has shape {:?}; need C×H×W or a frame {frame} of N×C×H×W",
                path.display(),
                tensor.shape()
            )))
        }
    };
    let data = tensor.into_dimensionality::<ndarray::Ix3>().map_err(|e| CliError::Invalid(e.to_string()))?;
    if data.dim() != shape {
        return Err(CliError::Invalid(format!("guidance is {:?} but the latent is {shape:?}", data.dim())));
    }
    Ok(FeatureMap::new(data, FeatureTag::Guidance)?)
}

pub fn demo_diffuse(root: &Path, args: DiffuseArgs) -> Result<PathBuf, CliError> {
    let target = args.output.resolve(root, "diffusion");
    let sched = make_linear_schedule(args.steps, args.beta_start, args.beta_end)?;
    let shape = args.latent;
    let guidance = match &args.guidance {
        Some(path) => guidance_latent(path, args.guidance_frame, shape)?,
        None => FeatureMap::zeros(shape, FeatureTag::Guidance),
    };
    let z_id = FeatureMap::zeros(shape, FeatureTag::Latent);
    let planted = gaussian_latent(shape, args.seed.wrapping_add(1));
    let start = match args.denoiser {
        DenoiserKind::Zero => LatentState { z: gaussian_latent(shape, args.seed), t: args.steps },
        DenoiserKind::Teacher => {
            let eps = gaussian_latent(shape, args.seed.wrapping_add(2));
            q_sample(&planted, args.steps, &eps, &sched)?
        }
    };
    let teacher = TeacherForced { z0: &planted, schedule: &sched };
    let denoiser: &dyn Denoiser = match args.denoiser {
        DenoiserKind::Zero => &ZeroDenoiser,
        DenoiserKind::Teacher => &teacher,
    };
    let options = SamplerOptions { seed: args.seed, add_noise: !args.no_noise };
    let trace = sample_trace(&start, denoiser, &guidance, &z_id, &sched, options)?;
    let trace: Vec<ArrayD<f64>> = trace.into_iter().map(|z| z.data.into_dyn()).collect();

    let stage = Staged::new(target, args.output.force)?;
    save_tensor(&stack(&trace), stage.path().join("trace.ftns"))?;
    if args.denoiser == DenoiserKind::Teacher {
        save_tensor(&planted.data.clone().into_dyn(), stage.path().join("planted.ftns"))?;
    }
    let mut manifest = RunManifest::new(
        "demo-diffuse",
        json!({
            "seed": args.seed,
            "schedule": { "steps": args.steps, "beta_start": args.beta_start, "beta_end": args.beta_end },
            "latent": [shape.0, shape.1, shape.2],
            "denoiser": format!("{:?}", args.denoiser).to_lowercase(),
            "add_noise": !args.no_noise,
            "guidance_frame": args.guidance.as_ref().map(|_| args.guidance_frame),
        }),
    );
    if let Some(path) = &args.guidance {
        manifest.add_input("guidance", path)?;
    }
    finish(stage, manifest)
}
