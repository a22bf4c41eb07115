use nalgebra::Vector3;
use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::rasterize::{rasterize, FragmentBuffer};
use crate::alignment::AlignedSequence;
use crate::assets::FlameModel;
use crate::error::{Error, Result};
use crate::kinematics::{forward, PosedMesh};

/// Smallest depth value a covered pixel can take, keeping it distinct from
/// the background's 0.
pub const DEPTH_FLOOR: f64 = 1.0 / 255.0;
pub const ALBEDO: f64 = 0.7;
pub const AMBIENT: f64 = 0.3;
/// Encoded value of the zero normal, used for background pixels.
pub const NORMAL_BACKGROUND: f64 = 0.5;

/// Unit direction toward the light (and roughly toward the camera).
pub fn light_direction() -> Vector3<f64> {
    Vector3::new(0.2, 0.2, 1.0).normalize()
}

/// View-distance interval mapped onto the depth map.
///
/// Distances are measured along the viewing direction, `d = −z`, so with
/// `near < far` nearer surfaces come out brighter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub near: f64,
    pub far: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { near: -1.5, far: 1.5 }
    }
}

impl DepthRange {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(near.is_finite() && far.is_finite() && near < far) {
            return Err(Error::invalid(format!("depth range needs near < far, got near={near}, far={far}")));
        }
        Ok(Self { near, far })
    }

    /// Normalized brightness of a covered pixel at camera-space `z`.
    pub fn encode(&self, z: f64) -> f64 {
        let distance = -z;
        ((self.far - distance) / (self.far - self.near)).clamp(DEPTH_FLOOR, 1.0)
    }
}

/// The three conditioning images of one frame, all values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMaps {
    /// H×W, background 0.
    pub depth: Array2<f64>,
    /// H×W×3, `(n + 1) / 2`, background 0.5.
    pub normal: Array3<f64>,
    /// H×W×3 gray Lambertian shading, background 0.
    pub render: Array3<f64>,
}

impl GuidanceMaps {
    pub fn size(&self) -> (usize, usize) {
        let (h, w) = self.depth.dim();
        (w, h)
    }
}

/// Depth image; uncovered pixels are 0.
pub fn depth_map(frags: &FragmentBuffer, near: f64, far: f64) -> Result<Array2<f64>> {
    let range = DepthRange::new(near, far)?;
    Ok(Array2::from_shape_fn((frags.height, frags.width), |(y, x)| {
        frags.get(x, y).map_or(0.0, |f| range.encode(f.depth))
    }))
}

/// Area-weighted vertex normals; `None` where every adjacent face is
/// degenerate.
fn vertex_normals(mesh: &PosedMesh<'_>) -> Vec<Option<Vector3<f64>>> {
    let mut acc = vec![Vector3::zeros(); mesh.vertices.nrows()];
    for face in mesh.faces.iter() {
        let [a, b, c] = face.map(|i| mesh.vertex(i as usize));
        // |cross| is twice the area, so summing raw cross products weights by area.
        let n = (b - a).cross(&(c - a));
        for &i in face {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            (len > 1e-300).then(|| n / len)
        })
        .collect()
}

fn face_normal(mesh: &PosedMesh<'_>, face: usize) -> Option<Vector3<f64>> {
    let [a, b, c] = mesh.faces[face].map(|i| mesh.vertex(i as usize));
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    (len > 1e-300).then(|| n / len)
}

/// Unit camera-space normal for every covered pixel, row-major.
///
/// Vertex normals are interpolated with the fragment's barycentrics and
/// renormalized; the face normal stands in when a vertex normal is
/// undefined or the interpolation cancels out.
pub fn pixel_normals(mesh: &PosedMesh<'_>, frags: &FragmentBuffer) -> Vec<Option<Vector3<f64>>> {
    let vn = vertex_normals(mesh);
    frags
        .pixels
        .iter()
        .map(|frag| {
            let frag = frag.as_ref()?;
            let face = mesh.faces[frag.face as usize];
            let mut n = Vector3::zeros();
            let mut complete = true;
            for (k, &vi) in face.iter().enumerate() {
                match vn[vi as usize] {
                    Some(v) => n += frag.barycentric[k] * v,
                    None => complete = false,
                }
            }
            let len = n.norm();
            if complete && len > 1e-12 {
                Some(n / len)
            } else {
                Some(face_normal(mesh, frag.face as usize).unwrap_or_else(Vector3::z))
            }
        })
        .collect()
}

fn normal_image(normals: &[Option<Vector3<f64>>], width: usize, height: usize) -> Array3<f64> {
    Array3::from_shape_fn((height, width, 3), |(y, x, c)| {
        normals[y * width + x].map_or(NORMAL_BACKGROUND, |n| (n[c] + 1.0) / 2.0)
    })
}

fn shade(n: &Vector3<f64>) -> f64 {
    ALBEDO * (AMBIENT + (1.0 - AMBIENT) * n.dot(&light_direction()).max(0.0))
}

fn shaded_image(normals: &[Option<Vector3<f64>>], width: usize, height: usize) -> Array3<f64> {
    Array3::from_shape_fn((height, width, 3), |(y, x, _)| normals[y * width + x].map_or(0.0, |n| shade(&n)))
}

/// Normal image, `(n + 1) / 2` per channel.
pub fn normal_map(mesh: &PosedMesh<'_>, frags: &FragmentBuffer) -> Array3<f64> {
    normal_image(&pixel_normals(mesh, frags), frags.width, frags.height)
}

/// Gray Lambertian shading under a fixed directional light, replicated to
/// three channels.
pub fn shaded_render(mesh: &PosedMesh<'_>, frags: &FragmentBuffer) -> Array3<f64> {
    shaded_image(&pixel_normals(mesh, frags), frags.width, frags.height)
}

/// All three maps from a single rasterization.
pub fn render_guidance(mesh: &PosedMesh<'_>, camera: &Camera, range: DepthRange) -> Result<GuidanceMaps> {
    camera.validate()?;
    let frags = rasterize(mesh, camera);
    let normals = pixel_normals(mesh, &frags);
    Ok(GuidanceMaps {
        depth: depth_map(&frags, range.near, range.far)?,
        normal: normal_image(&normals, frags.width, frags.height),
        render: shaded_image(&normals, frags.width, frags.height),
    })
}

/// Evaluates and renders every aligned frame. Frames run in parallel on the
/// current rayon pool; the output is identical for any pool size.
pub fn render_sequence(
    model: &FlameModel,
    seq: &AlignedSequence,
    camera: &Camera,
    range: DepthRange,
) -> Result<Vec<GuidanceMaps>> {
    camera.validate()?;
    seq.frames.frames.par_iter().map(|params| render_guidance(&forward(model, params)?, camera, range)).collect()
}
