use rayon::prelude::*;

use super::camera::{project, Camera};
use crate::kinematics::PosedMesh;

const BAND_ROWS: usize = 16;

/// What the rasterizer stored for one covered pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub face: u32,
    /// Weights of the face's three vertices, in face order.
    pub barycentric: [f64; 3],
    /// Interpolated camera-space z.
    pub depth: f64,
}

/// Per-pixel rasterization result, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Option<Fragment>>,
}

impl FragmentBuffer {
    pub fn get(&self, x: usize, y: usize) -> Option<&Fragment> {
        self.pixels[y * self.width + x].as_ref()
    }

    pub fn covered_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }
}

/// Edge function: twice the signed area of (a, b, p), positive when p lies
/// clockwise-on-screen of a→b (y grows downward).
#[inline]
fn edge(a: [f64; 3], b: [f64; 3], px: f64, py: f64) -> f64 {
    (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
}

/// Top-left rule for positively oriented triangles in y-down coordinates.
#[inline]
fn is_top_left(a: [f64; 3], b: [f64; 3]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

struct ScreenTriangle {
    face: u32,
    /// Vertices reordered to positive orientation.
    v: [[f64; 3]; 3],
    /// Position of each reordered vertex in the original face.
    slot: [usize; 3],
    area: f64,
    top_left: [bool; 3],
    bbox: [usize; 4],
}

fn setup(face: u32, idx: [u32; 3], screen: &[[f64; 3]], width: usize, height: usize) -> Option<ScreenTriangle> {
    let mut v = idx.map(|i| screen[i as usize]);
    let mut slot = [0, 1, 2];
    let mut area = edge(v[0], v[1], v[2][0], v[2][1]);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    if area < 0.0 {
        v.swap(1, 2);
        slot.swap(1, 2);
        area = -area;
    }
    let min_x = v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    // Pixel (x, y) samples at (x + 0.5, y + 0.5).
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x1 < x0 || y1 < y0 {
        return None;
    }
    Some(ScreenTriangle {
        face,
        v,
        slot,
        area,
        // Edge i is the one opposite vertex i.
        top_left: [is_top_left(v[1], v[2]), is_top_left(v[2], v[0]), is_top_left(v[0], v[1])],
        bbox: [x0 as usize, y0 as usize, x1 as usize, y1 as usize],
    })
}

/// Z-buffered coverage of `mesh` through `camera`.
///
/// Pixels are sampled at their centers with the top-left fill rule, so a
/// pixel on an edge shared by two triangles belongs to exactly one of them.
/// The greatest interpolated z wins; equal depths go to the lower face
/// index. The result does not depend on thread scheduling.
pub fn rasterize(mesh: &PosedMesh<'_>, camera: &Camera) -> FragmentBuffer {
    let (width, height) = (camera.width, camera.height);
    let screen = project(camera, mesh);
    let triangles: Vec<ScreenTriangle> =
        mesh.faces.iter().enumerate().filter_map(|(f, &idx)| setup(f as u32, idx, &screen, width, height)).collect();

    let mut pixels = vec![None; width * height];
    pixels.par_chunks_mut(BAND_ROWS * width).enumerate().for_each(|(band, rows)| {
        let band_y0 = band * BAND_ROWS;
        let band_y1 = band_y0 + rows.len() / width;
        for tri in &triangles {
            let [x0, y0, x1, y1] = tri.bbox;
            let ys = y0.max(band_y0)..=y1.min(band_y1.saturating_sub(1));
            if y1 < band_y0 || y0 >= band_y1 {
                continue;
            }
            for y in ys {
                let py = y as f64 + 0.5;
                for x in x0..=x1 {
                    let px = x as f64 + 0.5;
                    let w = [
                        edge(tri.v[1], tri.v[2], px, py),
                        edge(tri.v[2], tri.v[0], px, py),
                        edge(tri.v[0], tri.v[1], px, py),
                    ];
                    let inside = (0..3).all(|i| w[i] > 0.0 || (w[i] == 0.0 && tri.top_left[i]));
                    if !inside {
                        continue;
                    }
                    let b = w.map(|wi| wi / tri.area);
                    let depth = b[0] * tri.v[0][2] + b[1] * tri.v[1][2] + b[2] * tri.v[2][2];
                    let slot = &mut rows[(y - band_y0) * width + x];
                    if slot.is_some_and(|f: Fragment| f.depth >= depth) {
                        continue;
                    }
                    let mut barycentric = [0.0; 3];
                    for i in 0..3 {
                        barycentric[tri.slot[i]] = b[i];
                    }
                    *slot = Some(Fragment { face: tri.face, barycentric, depth });
                }
            }
        }
    });

    FragmentBuffer { width, height, pixels }
}
