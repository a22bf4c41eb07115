//! Motion guidance for parametric-head-driven portrait animation.
//!
//! The crate evaluates a FLAME-style head model (blendshapes, pose correctives
//! and linear blend skinning), recombines identity and driving parameters,
//! rasterizes depth / normal / shaded guidance maps, runs the guidance encoder
//! forward pass, and provides the DDPM kernel and the temporal window stitcher
//! that the generation side builds on.
//!
//! Everything here is CPU-only and deterministic for fixed inputs and seeds.

pub mod alignment;
pub mod assets;
mod binio;
pub mod diffusion;
pub mod encoder;
pub mod error;
pub mod kinematics;
pub mod raster;
pub mod stitch;
pub mod tensor_io;

pub use alignment::{align, substitute_expression, AlignedSequence};
pub use assets::{FlameModel, FlameParams, ParamSequence};
pub use encoder::FeatureMap;
pub use error::{Error, Result};
pub use kinematics::{forward, PosedMesh};
pub use raster::{Camera, GuidanceMaps};
