//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the library's math.

#![allow(dead_code, clippy::needless_range_loop)]

use flameguide::{FlameModel, FlameParams};

pub type Mat4 = [[f64; 4]; 4];

fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn translation(t: [f64; 3]) -> Mat4 {
    [[1.0, 0.0, 0.0, t[0]], [0.0, 1.0, 0.0, t[1]], [0.0, 0.0, 1.0, t[2]], [0.0, 0.0, 0.0, 1.0]]
}

/// Rotation matrix via the unit quaternion of an axis-angle vector.
pub fn quat_rotation(aa: [f64; 3]) -> [[f64; 3]; 3] {
    let theta = (aa[0] * aa[0] + aa[1] * aa[1] + aa[2] * aa[2]).sqrt();
    if theta == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let s = (theta / 2.0).sin() / theta;
    let (w, x, y, z) = ((theta / 2.0).cos(), aa[0] * s, aa[1] * s, aa[2] * s);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn global_transform(j: usize, model: &FlameModel, local: &[Mat4]) -> Mat4 {
    match model.parents[j] {
        None => local[j],
        Some(p) => mat4_mul(&global_transform(p, model, local), &local[j]),
    }
}

/// Textbook skinning: blendshapes, correctives, rest-relative joint chain
/// with homogeneous matrices, then per-vertex weighted sum.
pub fn brute_force_forward(model: &FlameModel, params: &FlameParams) -> Vec<[f64; 3]> {
    let n = model.template.nrows();
    let joints = model.joint_regressor.nrows();
    let mut shaped = vec![[0.0; 3]; n];
    for v in 0..n {
        for c in 0..3 {
            let mut x = model.template[[v, c]];
            for (b, &coef) in params.shape.iter().enumerate() {
                x += model.shape_basis[[v, c, b]] * coef;
            }
            for (e, &coef) in params.expression.iter().enumerate() {
                x += model.expression_basis[[v, c, e]] * coef;
            }
            shaped[v][c] = x;
        }
    }
    let mut rest = vec![[0.0; 3]; joints];
    for j in 0..joints {
        for v in 0..n {
            for c in 0..3 {
                rest[j][c] += model.joint_regressor[[j, v]] * shaped[v][c];
            }
        }
    }
    let rotations: Vec<[[f64; 3]; 3]> = (0..joints)
        .map(|j| quat_rotation([params.pose[3 * j], params.pose[3 * j + 1], params.pose[3 * j + 2]]))
        .collect();
    let mut feature = Vec::new();
    for r in &rotations[1..] {
        for (row, values) in r.iter().enumerate() {
            for (col, &value) in values.iter().enumerate() {
                feature.push(value - if row == col { 1.0 } else { 0.0 });
            }
        }
    }
    let mut posed_rest = shaped.clone();
    for v in 0..n {
        for c in 0..3 {
            for (p, &f) in feature.iter().enumerate() {
                posed_rest[v][c] += model.pose_corrective_basis[[v, c, p]] * f;
            }
        }
    }
    let local: Vec<Mat4> = (0..joints)
        .map(|j| {
            let offset = match model.parents[j] {
                None => rest[j],
                Some(p) => [rest[j][0] - rest[p][0], rest[j][1] - rest[p][1], rest[j][2] - rest[p][2]],
            };
            let r = rotations[j];
            [
                [r[0][0], r[0][1], r[0][2], offset[0]],
                [r[1][0], r[1][1], r[1][2], offset[1]],
                [r[2][0], r[2][1], r[2][2], offset[2]],
                [0.0, 0.0, 0.0, 1.0],
            ]
        })
        .collect();
    let skinning: Vec<Mat4> = (0..joints)
        .map(|j| {
            let g = global_transform(j, model, &local);
            mat4_mul(&g, &translation([-rest[j][0], -rest[j][1], -rest[j][2]]))
        })
        .collect();
    (0..n)
        .map(|v| {
            let p = [posed_rest[v][0], posed_rest[v][1], posed_rest[v][2], 1.0];
            let mut out = [0.0; 3];
            for (j, a) in skinning.iter().enumerate() {
                let w = model.skinning_weights[[v, j]];
                for c in 0..3 {
                    out[c] += w * (0..4).map(|k| a[c][k] * p[k]).sum::<f64>();
                }
            }
            out
        })
        .collect()
}

/// A covered pixel as seen by the reference rasterizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleHit {
    pub face: usize,
    pub depth: f64,
}

fn to_screen(p: [f64; 3], scale: f64, tx: f64, ty: f64, w: usize, h: usize) -> [f64; 3] {
    [(scale * p[0] + tx + 1.0) * w as f64 / 2.0, (1.0 - (scale * p[1] + ty)) * h as f64 / 2.0, p[2]]
}

/// Per-pixel point-in-triangle test over every face. Sample points are pixel
/// centers; points exactly on an edge count only for top or left edges;
/// the largest z wins, earlier faces win ties.
pub fn brute_force_raster(
    vertices: &[[f64; 3]],
    faces: &[[u32; 3]],
    (scale, tx, ty): (f64, f64, f64),
    width: usize,
    height: usize,
) -> Vec<Option<OracleHit>> {
    let screen: Vec<[f64; 3]> = vertices.iter().map(|&v| to_screen(v, scale, tx, ty, width, height)).collect();
    let mut out = vec![None; width * height];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best: Option<OracleHit> = None;
            for (f, face) in faces.iter().enumerate() {
                let mut t = face.map(|i| screen[i as usize]);
                let cross = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]);
                if cross == 0.0 {
                    continue;
                }
                let mut order = [0usize, 1, 2];
                if cross < 0.0 {
                    t.swap(1, 2);
                    order.swap(1, 2);
                }
                let area = cross.abs();
                let mut bary = [0.0; 3];
                let mut inside = true;
                for i in 0..3 {
                    let a = t[(i + 1) % 3];
                    let b = t[(i + 2) % 3];
                    let e = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
                    let top = a[1] == b[1] && b[0] > a[0];
                    let left = b[1] < a[1];
                    if e < 0.0 || (e == 0.0 && !(top || left)) {
                        inside = false;
                        break;
                    }
                    bary[order[i]] = e / area;
                }
                if !inside {
                    continue;
                }
                let z: f64 = (0..3).map(|k| bary[k] * vertices[face[k] as usize][2]).sum();
                if best.is_none_or(|b| z > b.depth) {
                    best = Some(OracleHit { face: f, depth: z });
                }
            }
            out[y * width + x] = best;
        }
    }
    out
}

/// Unit icosphere by repeated midpoint subdivision, outward CCW faces.
pub fn icosphere(subdivisions: usize) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| normalize(v))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache = std::collections::HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a as usize], verts[b as usize]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

pub fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (a, b) = (normalize(a), normalize(b));
    (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0).acos()
}
