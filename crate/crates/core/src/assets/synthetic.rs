//! Deterministic synthetic head models for tests and demos.
//!
//! The published model cannot be redistributed, so everything downstream is
//! exercised against small generated assets with the same structure: a closed
//! ellipsoidal blob, smooth low-amplitude bases, a FLAME-shaped joint tree
//! (root → neck → {jaw, eyes}) and normalized weights.

use std::collections::HashSet;
use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FlameModel, FlameParams, ParamSequence};
use crate::error::{Error, Result};

/// Largest magnitude of any blendshape basis entry.
pub const BASIS_AMPLITUDE: f64 = 0.05;
const CORRECTIVE_AMPLITUDE: f64 = 0.01;
const TEMPLATE_AXES: [f64; 3] = [0.8, 1.0, 0.85];

/// Surface anchors for the first articulated joints: neck, jaw, left eye,
/// right eye. Later joints get random anchors.
const ANCHORS: [[f64; 3]; 4] = [[0.0, -1.0, 0.0], [0.0, -0.6, 0.8], [0.35, 0.3, 0.88], [-0.35, 0.3, 0.88]];

/// Builds a deterministic test model with `n` vertices, `k` articulated
/// joints and the given (|β|, |ψ|) basis widths.
///
/// Every stored value is exactly representable as `f32`, so the model
/// survives a container round trip unchanged.
pub fn generate_test_model(seed: u64, n: usize, k: usize, basis_widths: (usize, usize)) -> Result<FlameModel> {
    if n < 4 {
        return Err(Error::invalid(format!("vertex count must be at least 4, got {n}")));
    }
    if k < 1 {
        return Err(Error::invalid("need at least one articulated joint".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joints = k + 1;

    let directions = fibonacci_sphere(n);
    let faces = sphere_hull(&directions);

    let bump = SmoothField::random(&mut rng);
    let mut template = Array2::zeros((n, 3));
    for (v, dir) in directions.iter().enumerate() {
        let radius = 1.0 + 0.03 * bump.eval(dir);
        for c in 0..3 {
            template[[v, c]] = round32(dir[c] * TEMPLATE_AXES[c] * radius);
        }
    }

    let mut random_basis = |width: usize, amplitude: f64| {
        let mut basis = Array3::zeros((n, 3, width));
        for col in 0..width {
            let fields: [SmoothField; 3] = std::array::from_fn(|_| SmoothField::random(&mut rng));
            for (v, dir) in directions.iter().enumerate() {
                for c in 0..3 {
                    basis[[v, c, col]] = round32(amplitude * fields[c].eval(dir));
                }
            }
        }
        basis
    };
    let shape_basis = random_basis(basis_widths.0, BASIS_AMPLITUDE);
    let expression_basis = random_basis(basis_widths.1, BASIS_AMPLITUDE);
    let pose_corrective_basis = random_basis(9 * k, CORRECTIVE_AMPLITUDE);

    let anchors: Vec<[f64; 3]> = (0..k)
        .map(|j| match ANCHORS.get(j) {
            Some(a) => normalize(*a),
            None => random_unit(&mut rng),
        })
        .collect();

    // Root regresses to the centroid; each articulated joint mixes the
    // centroid with a handful of vertices near its anchor so it sits inside
    // the blob.
    let mut joint_regressor = Array2::zeros((joints, n));
    joint_regressor.row_mut(0).fill(1.0 / n as f64);
    for (j, anchor) in anchors.iter().enumerate() {
        let mut nearest: Vec<usize> = (0..n).collect();
        nearest.sort_by(|&a, &b| dist2(&directions[a], anchor).total_cmp(&dist2(&directions[b], anchor)));
        let picks = &nearest[..n.min(6)];
        let raw: Vec<f64> = picks.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        let mut row = joint_regressor.row_mut(j + 1);
        row.fill(0.5 / n as f64);
        for (&v, w) in picks.iter().zip(&raw) {
            row[v] += 0.5 * w / total;
        }
    }

    let mut skinning_weights = Array2::zeros((n, joints));
    for (v, dir) in directions.iter().enumerate() {
        let mut row = vec![0.3; joints];
        for (j, anchor) in anchors.iter().enumerate() {
            row[j + 1] = (-dist2(dir, anchor) / 0.5).exp();
        }
        let total: f64 = row.iter().sum();
        for (j, w) in row.into_iter().enumerate() {
            skinning_weights[[v, j]] = w / total;
        }
    }
    joint_regressor.mapv_inplace(round32);
    skinning_weights.mapv_inplace(round32);

    let parents = (0..joints)
        .map(|j| match j {
            0 => None,
            1 => Some(0),
            _ => Some(1),
        })
        .collect();

    let model = FlameModel {
        template,
        faces,
        shape_basis,
        expression_basis,
        pose_corrective_basis,
        joint_regressor,
        skinning_weights,
        parents,
    };
    model.validate()?;
    Ok(model)
}

/// Random but plausible coefficients for `model`: blend coefficients in
/// ±1.5 and axis-angle components in ±`max_angle` radians.
pub fn random_params<R: Rng>(model: &FlameModel, rng: &mut R, max_angle: f64) -> FlameParams {
    let mut draw = |len: usize, bound: f64| -> Vec<f64> {
        (0..len).map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 }).collect()
    };
    FlameParams {
        shape: draw(model.shape_dim(), 1.5),
        expression: draw(model.expression_dim(), 1.5),
        pose: draw(model.pose_dim(), max_angle),
    }
}

/// A smoothly varying driving sequence: one random identity shape held
/// fixed, expression and pose oscillating over `frames` frames.
pub fn random_sequence(model: &FlameModel, seed: u64, frames: usize, fps: f64) -> Result<ParamSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_params(model, &mut rng, 0.2);
    let expr_amp = random_params(model, &mut rng, 0.2);
    let phases: Vec<f64> =
        (0..model.expression_dim() + model.pose_dim()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let ne = model.expression_dim();
    let out = (0..frames)
        .map(|i| {
            let t = i as f64 / fps;
            let wave = |idx: usize| (2.0 * PI * 0.5 * t + phases[idx]).sin();
            FlameParams {
                shape: base.shape.clone(),
                expression: (0..ne).map(|e| expr_amp.expression[e] * wave(e)).collect(),
                pose: base.pose.iter().enumerate().map(|(p, &a)| a * wave(ne + p)).collect(),
            }
        })
        .collect();
    ParamSequence::new(out, fps)
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = dot(&v, &v).sqrt();
    v.map(|x| x / len)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let len2 = dot(&v, &v);
        if len2 > 1e-4 && len2 <= 1.0 {
            return normalize(v);
        }
    }
}

/// A band-limited scalar field on the unit sphere with values in [-1, 1].
struct SmoothField {
    axis: [f64; 3],
    frequency: f64,
    phase: f64,
}

impl SmoothField {
    fn random<R: Rng>(rng: &mut R) -> Self {
        Self { axis: random_unit(rng), frequency: rng.random_range(1.0..3.0), phase: rng.random_range(0.0..2.0 * PI) }
    }

    fn eval(&self, p: &[f64; 3]) -> f64 {
        (self.frequency * dot(&self.axis, p) + self.phase).sin()
    }
}

/// `n` near-uniform unit vectors along a golden-angle spiral.
fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), y, r * phi.sin()]
        })
        .collect()
}

/// Convex hull of points in convex position (e.g. on a sphere), as
/// outward-facing counter-clockwise triangles. Incremental, O(n²).
fn sphere_hull(points: &[[f64; 3]]) -> Vec<[u32; 3]> {
    let n = points.len();
    // Initial tetrahedron from four well-spread points.
    let (a, b) = (0, n - 1);
    let ab = sub(&points[b], &points[a]);
    let c = (0..n)
        .max_by(|&i, &j| {
            let ci = cross(&ab, &sub(&points[i], &points[a]));
            let cj = cross(&ab, &sub(&points[j], &points[a]));
            dot(&ci, &ci).total_cmp(&dot(&cj, &cj))
        })
        .unwrap();
    let normal = cross(&ab, &sub(&points[c], &points[a]));
    let d = (0..n)
        .max_by(|&i, &j| {
            dot(&normal, &sub(&points[i], &points[a]))
                .abs()
                .total_cmp(&dot(&normal, &sub(&points[j], &points[a])).abs())
        })
        .unwrap();

    let centroid = [a, b, c, d].iter().fold([0.0; 3], |acc, &i| [0, 1, 2].map(|k| acc[k] + points[i][k] / 4.0));
    let orient = |f: [usize; 3]| -> [usize; 3] {
        let nrm = cross(&sub(&points[f[1]], &points[f[0]]), &sub(&points[f[2]], &points[f[0]]));
        if dot(&nrm, &sub(&points[f[0]], &centroid)) < 0.0 {
            [f[0], f[2], f[1]]
        } else {
            f
        }
    };
    let mut faces: Vec<[usize; 3]> = vec![orient([a, b, c]), orient([a, b, d]), orient([a, c, d]), orient([b, c, d])];

    for p in 0..n {
        if [a, b, c, d].contains(&p) {
            continue;
        }
        let visible: Vec<bool> = faces
            .iter()
            .map(|f| {
                let nrm = cross(&sub(&points[f[1]], &points[f[0]]), &sub(&points[f[2]], &points[f[0]]));
                dot(&nrm, &sub(&points[p], &points[f[0]])) > 1e-14
            })
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let visible_edges: HashSet<(usize, usize)> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| v)
            .flat_map(|(f, _)| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .collect();
        let mut next = Vec::with_capacity(faces.len() + 2);
        let mut horizon = Vec::new();
        for (f, vis) in faces.iter().zip(&visible) {
            if !vis {
                next.push(*f);
                continue;
            }
            for (u, v) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if !visible_edges.contains(&(v, u)) {
                    horizon.push((u, v));
                }
            }
        }
        next.extend(horizon.into_iter().map(|(u, v)| [u, v, p]));
        faces = next;
    }
    faces.into_iter().map(|f| f.map(|i| i as u32)).collect()
}
