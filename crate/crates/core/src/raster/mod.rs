//! Guidance-map rendering: weak-perspective projection, a deterministic
//! z-buffer rasterizer, and the depth / normal / shaded maps derived from it.

mod camera;
pub mod io;
mod maps;
mod rasterize;

pub use camera::{project, Camera};
pub use maps::{
    depth_map, normal_map, pixel_normals, render_guidance, render_sequence, shaded_render, DepthRange, GuidanceMaps,
    ALBEDO, AMBIENT, DEPTH_FLOOR, NORMAL_BACKGROUND,
};
pub use rasterize::{rasterize, Fragment, FragmentBuffer};

/// Default square render size.
pub const DEFAULT_RESOLUTION: usize = 512;
