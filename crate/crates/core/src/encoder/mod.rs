//! Geometric guidance encoder forward pass.
//!
//! One branch per conditioning image (depth, normal, shaded render): a
//! strided conv stack with SiLU, one self-attention block at the final
//! resolution, then a zero-initialized 3×3 output conv. Branch outputs are
//! summed into a single guidance tensor that is added to the noisy latent.
//! Because the output convs start at zero, a freshly initialized encoder
//! leaves the latent untouched.

mod attention;
mod conv;
#[cfg(test)]
mod oracle;
mod weights;

use std::fmt;

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GuidanceMaps;

pub use attention::{attention_weights, self_attention_forward, Attention};
pub use conv::{conv_forward, silu, Activation, ConvLayer};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, BranchWeights, EncoderWeights, GgeConfig, WEIGHTS_MAGIC,
};

/// What a feature map represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTag {
    Depth,
    Normal,
    Render,
    Latent,
    Guidance,
}

impl FeatureTag {
    /// The three guidance-image kinds in branch order.
    pub const GUIDANCE_KINDS: [FeatureTag; 3] = [FeatureTag::Depth, FeatureTag::Normal, FeatureTag::Render];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        [Self::Depth, Self::Normal, Self::Render, Self::Latent, Self::Guidance].get(code as usize).copied()
    }
}

impl fmt::Display for FeatureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FeatureTag::Depth => "depth",
            FeatureTag::Normal => "normal",
            FeatureTag::Render => "render",
            FeatureTag::Latent => "latent",
            FeatureTag::Guidance => "guidance",
        };
        f.write_str(name)
    }
}

/// A C×H×W grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub data: Array3<f64>,
    pub tag: FeatureTag,
}

impl FeatureMap {
    pub fn new(data: Array3<f64>, tag: FeatureTag) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!("feature map dimensions must be positive, got {c}×{h}×{w}")));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("{tag} feature map has non-finite values")));
        }
        Ok(Self { data, tag })
    }

    pub fn zeros(shape: (usize, usize, usize), tag: FeatureTag) -> Self {
        Self { data: Array3::zeros(shape), tag }
    }

    /// (channels, height, width)
    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// Converts rendered maps into branch inputs: depth as one channel, normal
/// and render as three, all channel-first.
pub fn guidance_features(maps: &GuidanceMaps) -> [FeatureMap; 3] {
    let (h, w) = maps.depth.dim();
    let depth = maps.depth.to_shape((1, h, w)).expect("same element count").to_owned();
    let chw = |a: &Array3<f64>| a.view().permuted_axes([2, 0, 1]).as_standard_layout().into_owned();
    [
        FeatureMap { data: depth, tag: FeatureTag::Depth },
        FeatureMap { data: chw(&maps.normal), tag: FeatureTag::Normal },
        FeatureMap { data: chw(&maps.render), tag: FeatureTag::Render },
    ]
}

/// conv stack → self-attention → zero-initialized output conv.
pub fn encode_branch(input: &FeatureMap, branch: &BranchWeights, config: &GgeConfig) -> Result<FeatureMap> {
    if input.tag != branch.kind {
        return Err(Error::invalid(format!("{} branch received a {} image", branch.kind, input.tag)));
    }
    let expected = (branch.in_channels, config.input_height, config.input_width);
    if input.shape() != expected {
        return Err(Error::shape(
            format!("{} guidance input", branch.kind),
            format!("{expected:?}"),
            format!("{:?}", input.shape()),
        ));
    }
    let mut x = input.clone();
    for layer in &branch.convs {
        x = conv_forward(&x, layer)?;
    }
    x = self_attention_forward(&x, &branch.attention)?;
    let mut out = conv_forward(&x, &branch.zero_out)?;
    out.tag = FeatureTag::Guidance;
    let latent = config.latent_shape();
    if out.shape() != latent {
        return Err(Error::shape("branch output", format!("{latent:?}"), format!("{:?}", out.shape())));
    }
    Ok(out)
}

/// Element-wise sum of exactly `branch_count` equally shaped branch outputs.
pub fn fuse(branch_outputs: &[FeatureMap], branch_count: usize) -> Result<FeatureMap> {
    if branch_outputs.len() != branch_count {
        return Err(Error::shape("guidance branch count", branch_count, branch_outputs.len()));
    }
    let first = branch_outputs.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    let mut sum = first.data.clone();
    for other in &branch_outputs[1..] {
        if other.shape() != first.shape() {
            return Err(Error::shape(
                "fused branch shape",
                format!("{:?}", first.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        sum += &other.data;
    }
    Ok(FeatureMap { data: sum, tag: FeatureTag::Guidance })
}

/// Adds the guidance tensor to the noisy latent.
pub fn inject(noisy_latent: &FeatureMap, guidance: &FeatureMap) -> Result<FeatureMap> {
    if noisy_latent.shape() != guidance.shape() {
        return Err(Error::shape(
            "guidance vs latent shape",
            format!("{:?}", noisy_latent.shape()),
            format!("{:?}", guidance.shape()),
        ));
    }
    let mut data = noisy_latent.data.clone();
    Zip::from(&mut data).and(&guidance.data).for_each(|z, &c| *z += c);
    Ok(FeatureMap { data, tag: FeatureTag::Latent })
}

impl EncoderWeights {
    /// Runs every branch on its input (inputs in branch order) and fuses.
    pub fn encode(&self, inputs: &[FeatureMap]) -> Result<FeatureMap> {
        if inputs.len() != self.branches.len() {
            return Err(Error::shape("guidance inputs", self.branches.len(), inputs.len()));
        }
        let outputs = self
            .branches
            .iter()
            .zip(inputs)
            .map(|(branch, input)| encode_branch(input, branch, &self.config))
            .collect::<Result<Vec<_>>>()?;
        fuse(&outputs, self.config.branch_count())
    }

    /// Convenience: encode one frame's rendered maps.
    pub fn encode_maps(&self, maps: &GuidanceMaps) -> Result<FeatureMap> {
        self.encode(&guidance_features(maps))
    }
}
