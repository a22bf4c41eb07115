//! Encoder configuration, initialization and the weight file.
//!
//! ```text
//! magic     "GGEW"
//! version   u16 (= 1)
//! header    u32: input_height, input_width, kernel, heads, latent_channels
//!           u32: plan length L, then L hidden widths
//!           u32: stride count (= L + 1), then the strides
//!           u32: branch count M, then M × (tag code, input channels)
//! payload   f32, per branch in order:
//!             per conv layer: weight (out, in, k, k), bias (out)
//!             attention: query, key, value, output (C × C each)
//!             output conv: weight (C, C, k, k), bias (C)
//! ```
//!
//! Every array shape follows from the header; nothing may trail the payload.

use std::fs;
use std::path::Path;

use ndarray::{Array, Array1, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, Attention, ConvLayer, FeatureTag};
use crate::binio::{put_f32s, put_u32, Reader};
use crate::error::{Error, Result};
use crate::raster::DEFAULT_RESOLUTION;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"GGEW";
const VERSION: u16 = 1;
const WHAT: &str = "encoder weights";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GgeConfig {
    pub input_height: usize,
    pub input_width: usize,
    /// One entry per branch: the image kind it consumes and its channel count.
    pub branches: Vec<(FeatureTag, usize)>,
    /// Hidden conv widths; a final conv maps to `latent_channels`.
    pub channel_plan: Vec<usize>,
    pub latent_channels: usize,
    /// One stride per conv in the stack (`channel_plan.len() + 1`).
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub heads: usize,
}

impl Default for GgeConfig {
    fn default() -> Self {
        Self {
            input_height: DEFAULT_RESOLUTION,
            input_width: DEFAULT_RESOLUTION,
            branches: vec![(FeatureTag::Depth, 1), (FeatureTag::Normal, 3), (FeatureTag::Render, 3)],
            channel_plan: vec![16, 32, 64],
            latent_channels: 4,
            strides: vec![2, 2, 2, 1],
            kernel: 3,
            heads: 1,
        }
    }
}

impl GgeConfig {
    /// Default architecture at a square input resolution.
    pub fn with_resolution(size: usize) -> Self {
        Self { input_height: size, input_width: size, ..Self::default() }
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn downsample_factor(&self) -> usize {
        self.strides.iter().product()
    }

    /// (channels, height, width) of every branch output.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        let f = self.downsample_factor().max(1);
        (self.latent_channels, self.input_height / f, self.input_width / f)
    }

    /// (in, out, stride) for each layer of the conv stack of one branch.
    pub fn conv_shapes(&self, in_channels: usize) -> Vec<(usize, usize, usize)> {
        let widths = std::iter::once(in_channels)
            .chain(self.channel_plan.iter().copied())
            .chain(std::iter::once(self.latent_channels))
            .collect::<Vec<_>>();
        widths.windows(2).zip(&self.strides).map(|(w, &s)| (w[0], w[1], s)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.branches.is_empty() {
            return bad("encoder needs at least one branch".into());
        }
        for &(tag, c) in &self.branches {
            if !FeatureTag::GUIDANCE_KINDS.contains(&tag) || c == 0 {
                return bad(format!("branch ({tag}, {c} channels) is not a guidance input"));
            }
        }
        if self.strides.len() != self.channel_plan.len() + 1 {
            return bad(format!("{} strides for {} conv layers", self.strides.len(), self.channel_plan.len() + 1));
        }
        if self.strides.iter().chain(&self.channel_plan).any(|&v| v == 0) || self.latent_channels == 0 {
            return bad("strides and channel widths must be positive".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.heads == 0 || !self.latent_channels.is_multiple_of(self.heads) {
            return bad(format!(
                "{} latent channels cannot be split across {} heads",
                self.latent_channels, self.heads
            ));
        }
        let f = self.downsample_factor();
        if !self.input_height.is_multiple_of(f)
            || !self.input_width.is_multiple_of(f)
            || self.input_height == 0
            || self.input_width == 0
        {
            return bad(format!(
                "input {}×{} is not a positive multiple of the downsample factor {f}",
                self.input_height, self.input_width
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchWeights {
    pub kind: FeatureTag,
    pub in_channels: usize,
    pub convs: Vec<ConvLayer>,
    pub attention: Attention,
    pub zero_out: ConvLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub config: GgeConfig,
    pub branches: Vec<BranchWeights>,
}

// Uniform in ±1/√fan_in, rounded through f32 so a save/load cycle is exact.
fn uniform(rng: &mut ChaCha8Rng, fan_in: usize) -> impl FnMut() -> f64 + '_ {
    let bound = 1.0 / (fan_in as f64).sqrt();
    move || rng.random_range(-bound..bound) as f32 as f64
}

fn random_conv(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, stride: usize, act: Activation) -> ConvLayer {
    let mut draw = uniform(rng, cin * k * k);
    let weight = Array4::from_shape_simple_fn((cout, cin, k, k), &mut draw);
    let bias = Array1::from_shape_simple_fn(cout, &mut draw);
    ConvLayer { weight, bias, stride, activation: act }
}

impl EncoderWeights {
    /// Seeded random initialization; the output conv of every branch is zero.
    pub fn init(config: &GgeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel;
        let c = config.latent_channels;
        let branches = config
            .branches
            .iter()
            .map(|&(kind, in_channels)| {
                let convs = config
                    .conv_shapes(in_channels)
                    .into_iter()
                    .map(|(cin, cout, s)| random_conv(&mut rng, cin, cout, k, s, Activation::Silu))
                    .collect();
                let mut draw = uniform(&mut rng, c);
                let mut proj = || Array2::from_shape_simple_fn((c, c), &mut draw);
                let attention = Attention { wq: proj(), wk: proj(), wv: proj(), wo: proj(), heads: config.heads };
                BranchWeights {
                    kind,
                    in_channels,
                    convs,
                    attention,
                    zero_out: ConvLayer::zeros(c, c, k, 1, Activation::None),
                }
            })
            .collect();
        Ok(Self { config: config.clone(), branches })
    }

    /// Replaces every output conv with random values, standing in for a
    /// trained encoder.
    pub fn randomize_output(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, c) = (self.config.kernel, self.config.latent_channels);
        for branch in &mut self.branches {
            branch.zero_out = random_conv(&mut rng, c, c, k, 1, Activation::None);
        }
    }

    pub fn is_zero_initialized(&self) -> bool {
        self.branches.iter().all(|b| b.zero_out.weight.iter().chain(&b.zero_out.bias).all(|&v| v == 0.0))
    }

    /// Checks every array against the shapes the config implies.
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        if self.branches.len() != cfg.branch_count() {
            return Err(Error::shape("encoder branches", cfg.branch_count(), self.branches.len()));
        }
        let (k, c) = (cfg.kernel, cfg.latent_channels);
        let check_conv = |name: String, layer: &ConvLayer, cin: usize, cout: usize, stride: usize| {
            let want = (cout, cin, k, k);
            if layer.weight.dim() != want || layer.bias.len() != cout || layer.stride != stride {
                return Err(Error::shape(
                    name,
                    format!("weight {want:?}, bias {cout}, stride {stride}"),
                    format!("weight {:?}, bias {}, stride {}", layer.weight.dim(), layer.bias.len(), layer.stride),
                ));
            }
            Ok(())
        };
        for (b, (&(kind, cin), branch)) in cfg.branches.iter().zip(&self.branches).enumerate() {
            if branch.kind != kind || branch.in_channels != cin {
                return Err(Error::invalid(format!(
                    "branch {b} is ({}, {}), config expects ({kind}, {cin})",
                    branch.kind, branch.in_channels
                )));
            }
            let shapes = cfg.conv_shapes(cin);
            if branch.convs.len() != shapes.len() {
                return Err(Error::shape(format!("branch {b} conv count"), shapes.len(), branch.convs.len()));
            }
            for (i, (layer, (ci, co, s))) in branch.convs.iter().zip(shapes).enumerate() {
                check_conv(format!("branch {b} conv {i}"), layer, ci, co, s)?;
            }
            check_conv(format!("branch {b} output conv"), &branch.zero_out, c, c, 1)?;
            if branch.attention.channels() != c || branch.attention.heads != cfg.heads {
                return Err(Error::shape(format!("branch {b} attention width"), c, branch.attention.channels()));
            }
        }
        Ok(())
    }
}

pub fn write_weights(weights: &EncoderWeights) -> Result<Vec<u8>> {
    weights.validate()?;
    let cfg = &weights.config;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [cfg.input_height, cfg.input_width, cfg.kernel, cfg.heads, cfg.latent_channels] {
        put_u32(&mut out, v)?;
    }
    for list in [&cfg.channel_plan, &cfg.strides] {
        put_u32(&mut out, list.len())?;
        for &v in list.iter() {
            put_u32(&mut out, v)?;
        }
    }
    put_u32(&mut out, cfg.branch_count())?;
    for &(tag, c) in &cfg.branches {
        put_u32(&mut out, tag.code() as usize)?;
        put_u32(&mut out, c)?;
    }
    for branch in &weights.branches {
        for layer in &branch.convs {
            put_f32s(&mut out, &layer.weight);
            put_f32s(&mut out, &layer.bias);
        }
        let a = &branch.attention;
        for m in [&a.wq, &a.wk, &a.wv, &a.wo] {
            put_f32s(&mut out, m);
        }
        put_f32s(&mut out, &branch.zero_out.weight);
        put_f32s(&mut out, &branch.zero_out.bias);
    }
    Ok(out)
}

pub fn read_weights(bytes: &[u8]) -> Result<EncoderWeights> {
    let mut r = Reader::new(bytes, WHAT);
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::format(WHAT, "bad magic, expected \"GGEW\""));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let mut word = || r.u32().map(|v| v as usize);
    let (input_height, input_width, kernel, heads, latent_channels) = (word()?, word()?, word()?, word()?, word()?);
    let list = |r: &mut Reader| -> Result<Vec<usize>> {
        let len = r.u32()? as usize;
        if len > 64 {
            return Err(Error::format(WHAT, format!("implausible list length {len}")));
        }
        Ok(r.u32s(len)?.into_iter().map(|v| v as usize).collect())
    };
    let channel_plan = list(&mut r)?;
    let strides = list(&mut r)?;
    let count = r.u32()? as usize;
    if count > 16 {
        return Err(Error::format(WHAT, format!("implausible branch count {count}")));
    }
    let mut branches = Vec::with_capacity(count);
    for _ in 0..count {
        let code = r.u32()?;
        let tag = FeatureTag::from_code(code).ok_or_else(|| Error::format(WHAT, format!("unknown tag code {code}")))?;
        branches.push((tag, r.u32()? as usize));
    }
    let config =
        GgeConfig { input_height, input_width, branches, channel_plan, latent_channels, strides, kernel, heads };
    config.validate().map_err(|e| Error::format(WHAT, e.to_string()))?;

    let shape_err = |e: ndarray::ShapeError| Error::format(WHAT, e.to_string());
    let (k, c) = (kernel, latent_channels);
    let read_conv = |r: &mut Reader, cin: usize, cout: usize, stride: usize, act: Activation| -> Result<ConvLayer> {
        let weight = Array::from_shape_vec((cout, cin, k, k), r.f32s(cout * cin * k * k)?).map_err(shape_err)?;
        let bias = Array1::from(r.f32s(cout)?);
        Ok(ConvLayer { weight, bias, stride, activation: act })
    };
    let mut out = Vec::with_capacity(count);
    for &(kind, in_channels) in &config.branches {
        let convs = config
            .conv_shapes(in_channels)
            .into_iter()
            .map(|(ci, co, s)| read_conv(&mut r, ci, co, s, Activation::Silu))
            .collect::<Result<Vec<_>>>()?;
        let proj = |r: &mut Reader| Array2::from_shape_vec((c, c), r.f32s(c * c)?).map_err(shape_err);
        let attention = Attention { wq: proj(&mut r)?, wk: proj(&mut r)?, wv: proj(&mut r)?, wo: proj(&mut r)?, heads };
        let zero_out = read_conv(&mut r, c, c, 1, Activation::None)?;
        out.push(BranchWeights { kind, in_channels, convs, attention, zero_out });
    }
    if r.remaining() != 0 {
        return Err(Error::format(WHAT, format!("{} trailing bytes", r.remaining())));
    }
    Ok(EncoderWeights { config, branches: out })
}

pub fn save_weights(weights: &EncoderWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_weights(weights)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<EncoderWeights> {
    let path = path.as_ref();
    read_weights(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
