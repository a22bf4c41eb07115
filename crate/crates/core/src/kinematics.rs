//! Evaluation of the head model: blendshapes, pose correctives, joint
//! regression and linear blend skinning.
//!
//! Order of operations in [`forward`]:
//! template → + identity offsets → + expression offsets → joints regressed
//! from that shaped mesh → + pose correctives → skinned.

use std::borrow::Cow;

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::assets::{FlameModel, FlameParams};
use crate::error::{Error, Result};

/// A skinned mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedMesh<'a> {
    /// n×3 posed vertex positions.
    pub vertices: Array2<f64>,
    pub faces: Cow<'a, [[u32; 3]]>,
    /// k'×3 posed joint positions.
    pub joints: Array2<f64>,
}

impl<'a> PosedMesh<'a> {
    /// A mesh that is not the output of a model evaluation (tests, tools).
    pub fn from_parts(vertices: Array2<f64>, faces: Vec<[u32; 3]>) -> PosedMesh<'static> {
        PosedMesh { vertices, faces: Cow::Owned(faces), joints: Array2::zeros((0, 3)) }
    }

    pub fn vertex(&self, i: usize) -> Vector3<f64> {
        let row = self.vertices.row(i);
        Vector3::new(row[0], row[1], row[2])
    }

    pub fn into_owned(self) -> PosedMesh<'static> {
        PosedMesh { vertices: self.vertices, faces: Cow::Owned(self.faces.into_owned()), joints: self.joints }
    }
}

/// World-frame rigid transform per joint: `x ↦ rotations[j]·x + translations[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransforms {
    pub rotations: Vec<Matrix3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

impl JointTransforms {
    /// Where joint `j` ends up, given its rest position.
    pub fn apply(&self, j: usize, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotations[j] * p + self.translations[j]
    }
}

/// Rodrigues' formula. A zero vector yields the identity exactly.
pub fn axis_angle_to_rotation(aa: [f64; 3]) -> Matrix3<f64> {
    let v = Vector3::from(aa);
    let angle = v.norm();
    if angle == 0.0 {
        return Matrix3::identity();
    }
    let axis = v / angle;
    let k = axis.cross_matrix();
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Inverse of [`axis_angle_to_rotation`], returning an angle in [0, π].
pub fn rotation_to_axis_angle(r: &Matrix3<f64>) -> [f64; 3] {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin = skew.norm() / 2.0;
    let cos = (r.trace() - 1.0) / 2.0;
    let angle = sin.atan2(cos);
    if angle < 1e-7 {
        // sin θ ≈ θ: the skew part is 2θ·axis.
        return (skew / 2.0).into();
    }
    if angle < std::f64::consts::FRAC_PI_2 {
        return (skew * (angle / (2.0 * sin))).into();
    }
    // Large angles: the symmetric part is cos·I + (1 − cos)·aaᵀ.
    let outer = ((r + r.transpose()) / 2.0 - Matrix3::identity() * cos) / (1.0 - cos);
    let col = (0..3).max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)])).unwrap();
    let mut axis = outer.column(col).into_owned().normalize();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    (axis * angle).into()
}

fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::shape(what, expected, actual));
    }
    Ok(())
}

/// Contracts an n×3×w basis with a w-vector, giving n×3 offsets.
fn contract(basis: &ndarray::Array3<f64>, coeffs: &[f64]) -> Array2<f64> {
    let (n, _, w) = basis.dim();
    let flat = basis.view().into_shape_with_order((n * 3, w)).expect("model arrays are in standard layout");
    let offsets: Array1<f64> = flat.dot(&ArrayView1::from(coeffs));
    offsets.into_shape_with_order((n, 3)).expect("length is n·3")
}

/// Template plus identity and expression offsets.
pub fn apply_blendshapes(model: &FlameModel, shape: &[f64], expression: &[f64]) -> Result<Array2<f64>> {
    check_len("shape coefficients", model.shape_dim(), shape.len())?;
    check_len("expression coefficients", model.expression_dim(), expression.len())?;
    let mut out = model.template.clone();
    if model.shape_dim() > 0 {
        out += &contract(&model.shape_basis, shape);
    }
    if model.expression_dim() > 0 {
        out += &contract(&model.expression_basis, expression);
    }
    Ok(out)
}

/// Rest joint locations, `J = regressor · vertices`.
pub fn regress_joints(model: &FlameModel, shaped_vertices: &Array2<f64>) -> Result<Array2<f64>> {
    if shaped_vertices.dim() != (model.vertex_count(), 3) {
        return Err(Error::shape(
            "shaped vertices",
            format!("({}, 3)", model.vertex_count()),
            format!("{:?}", shaped_vertices.dim()),
        ));
    }
    Ok(model.joint_regressor.dot(shaped_vertices))
}

fn pose_triple(pose: &[f64], joint: usize) -> [f64; 3] {
    [pose[3 * joint], pose[3 * joint + 1], pose[3 * joint + 2]]
}

/// The 9k-long corrective feature: `vec(R_j − I)` for every articulated
/// joint, row-major.
pub fn pose_feature(model: &FlameModel, pose: &[f64]) -> Result<Vec<f64>> {
    check_len("pose vector", model.pose_dim(), pose.len())?;
    let mut feature = Vec::with_capacity(9 * model.articulated_joints());
    for j in 1..model.joint_count() {
        let delta = axis_angle_to_rotation(pose_triple(pose, j)) - Matrix3::identity();
        for r in 0..3 {
            for c in 0..3 {
                feature.push(delta[(r, c)]);
            }
        }
    }
    Ok(feature)
}

/// Pose-dependent corrective offsets (n×3).
pub fn pose_correctives(model: &FlameModel, pose: &[f64]) -> Result<Array2<f64>> {
    let feature = pose_feature(model, pose)?;
    Ok(contract(&model.pose_corrective_basis, &feature))
}

/// Composes per-joint local rotations along the kinematic tree. Every joint
/// rotates about its own rest position; the root's rotation is the global
/// head rotation.
pub fn joint_transforms(model: &FlameModel, rest_joints: &Array2<f64>, pose: &[f64]) -> Result<JointTransforms> {
    check_len("pose vector", model.pose_dim(), pose.len())?;
    let joints = model.joint_count();
    check_len("rest joints", joints, rest_joints.nrows())?;
    let order = model.joint_order()?;

    let mut rotations = vec![Matrix3::identity(); joints];
    let mut translations = vec![Vector3::zeros(); joints];
    for j in order {
        let local = axis_angle_to_rotation(pose_triple(pose, j));
        let rest = rest_joints.row(j);
        let rest = Vector3::new(rest[0], rest[1], rest[2]);
        // Local map x ↦ R(x − c) + c, written as R·x + (c − R·c) so that an
        // identity rotation contributes an exactly zero offset.
        let local_offset = rest - local * rest;
        match model.parents[j] {
            None => {
                rotations[j] = local;
                translations[j] = local_offset;
            }
            Some(p) => {
                rotations[j] = rotations[p] * local;
                translations[j] = rotations[p] * local_offset + translations[p];
            }
        }
    }
    Ok(JointTransforms { rotations, translations })
}

/// Linear blend skinning of `vertices` with the given joint transforms.
///
/// Computed as `v + Σ_j w_j·((G_j − I)·v + t_j)`, which equals
/// `Σ_j w_j·(G_j·v + t_j)` for normalized weights and leaves the rest pose
/// bit-exact.
pub fn skin(model: &FlameModel, vertices: &Array2<f64>, transforms: &JointTransforms) -> Array2<f64> {
    let deltas: Vec<Matrix3<f64>> = transforms.rotations.iter().map(|r| r - Matrix3::identity()).collect();
    let mut out = vertices.clone();
    for (mut v_out, w) in out.axis_iter_mut(Axis(0)).zip(model.skinning_weights.axis_iter(Axis(0))) {
        let v = Vector3::new(v_out[0], v_out[1], v_out[2]);
        let mut shift = Vector3::zeros();
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                shift += wj * (deltas[j] * v + transforms.translations[j]);
            }
        }
        v_out[0] += shift.x;
        v_out[1] += shift.y;
        v_out[2] += shift.z;
    }
    out
}

/// Evaluates the model for one frame of coefficients.
pub fn forward<'m>(model: &'m FlameModel, params: &FlameParams) -> Result<PosedMesh<'m>> {
    params.check_against(model)?;
    let shaped = apply_blendshapes(model, &params.shape, &params.expression)?;
    let rest_joints = regress_joints(model, &shaped)?;
    let posed_rest = shaped + pose_correctives(model, &params.pose)?;
    let transforms = joint_transforms(model, &rest_joints, &params.pose)?;
    let vertices = skin(model, &posed_rest, &transforms);

    let mut joints = Array2::zeros(rest_joints.dim());
    for (j, rest) in rest_joints.outer_iter().enumerate() {
        let p = transforms.apply(j, &Vector3::new(rest[0], rest[1], rest[2]));
        joints.row_mut(j).assign(&ArrayView1::from(p.as_slice()));
    }
    Ok(PosedMesh { vertices, faces: Cow::Borrowed(&model.faces), joints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{generate_test_model, random_params};
    use approx::assert_abs_diff_eq;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_axis_angle_is_exact_identity() {
        assert_eq!(axis_angle_to_rotation([0.0; 3]), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_angle_to_rotation([0.0, 0.0, FRAC_PI_2]);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(r, expected, epsilon = 1e-9);
    }

    #[test]
    fn rodrigues_matches_quaternion_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let aa: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
            let q = UnitQuaternion::from_scaled_axis(Vector3::from(aa));
            let ours = axis_angle_to_rotation(aa);
            assert_abs_diff_eq!(ours, *q.to_rotation_matrix().matrix(), epsilon = 1e-9);
            assert_abs_diff_eq!(ours.transpose() * ours, Matrix3::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_map_inverts_exp_map_including_near_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..300 {
            let axis =
                Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64))
                    .normalize();
            let angle = match i % 3 {
                0 => rng.random_range(0.0..std::f64::consts::PI),
                1 => std::f64::consts::PI - rng.random_range(0.0..1e-5),
                _ => rng.random_range(0.0..1e-6),
            };
            let r = axis_angle_to_rotation((axis * angle).into());
            let back = axis_angle_to_rotation(rotation_to_axis_angle(&r));
            assert_abs_diff_eq!(back, r, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_coefficients_give_template() {
        let model = generate_test_model(7, 30, 4, (4, 4)).unwrap();
        let shaped = apply_blendshapes(&model, &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(shaped, model.template);
    }

    #[test]
    fn single_column_basis_is_linear() {
        let mut model = generate_test_model(7, 20, 2, (1, 0)).unwrap();
        model.shape_basis.fill(0.0);
        model.shape_basis[[3, 1, 0]] = 0.25;
        let shaped = apply_blendshapes(&model, &[2.0], &[]).unwrap();
        let mut expected = model.template.clone();
        expected[[3, 1]] += 0.5;
        assert_eq!(shaped, expected);
    }

    #[test]
    fn blendshapes_match_double_loop() {
        let model = generate_test_model(7, 100, 4, (10, 10)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&model, &mut rng, 0.3);
        let got = apply_blendshapes(&model, &p.shape, &p.expression).unwrap();
        for v in 0..100 {
            for c in 0..3 {
                let mut acc = model.template[[v, c]];
                for b in 0..10 {
                    acc += model.shape_basis[[v, c, b]] * p.shape[b];
                }
                for e in 0..10 {
                    acc += model.expression_basis[[v, c, e]] * p.expression[e];
                }
                assert_abs_diff_eq!(got[[v, c]], acc, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn blendshape_width_mismatch_is_error() {
        let model = generate_test_model(7, 20, 2, (3, 3)).unwrap();
        assert!(apply_blendshapes(&model, &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn one_hot_and_uniform_regressor_rows() {
        let mut model = generate_test_model(7, 20, 2, (1, 1)).unwrap();
        model.joint_regressor.fill(0.0);
        model.joint_regressor[[0, 7]] = 1.0;
        model.joint_regressor.row_mut(1).fill(1.0 / 20.0);
        let joints = regress_joints(&model, &model.template).unwrap();
        assert_eq!(joints.row(0), model.template.row(7));
        let centroid = model.template.mean_axis(Axis(0)).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(joints[[1, c]], centroid[c], epsilon = 1e-12);
        }
    }

    #[test]
    fn regressor_matches_naive_matmul() {
        let model = generate_test_model(9, 50, 4, (2, 2)).unwrap();
        let joints = regress_joints(&model, &model.template).unwrap();
        for j in 0..5 {
            for c in 0..3 {
                let naive: f64 = (0..50).map(|v| model.joint_regressor[[j, v]] * model.template[[v, c]]).sum();
                assert_abs_diff_eq!(joints[[j, c]], naive, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn correctives_vanish_at_rest_and_for_null_basis() {
        let mut model = generate_test_model(7, 30, 4, (2, 2)).unwrap();
        let zero = pose_correctives(&model, &[0.0; 15]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        model.pose_corrective_basis.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&model, &mut rng, 1.0);
        let off = pose_correctives(&model, &p.pose).unwrap();
        assert!(off.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn correctives_match_feature_then_contract() {
        let model = generate_test_model(7, 100, 4, (2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&model, &mut rng, 0.5);
        // Feature built through the quaternion route, then a naive contraction.
        let mut feature = Vec::new();
        for j in 1..5 {
            let aa = Vector3::new(p.pose[3 * j], p.pose[3 * j + 1], p.pose[3 * j + 2]);
            let r = *UnitQuaternion::from_scaled_axis(aa).to_rotation_matrix().matrix();
            for row in 0..3 {
                for col in 0..3 {
                    feature.push(r[(row, col)] - if row == col { 1.0 } else { 0.0 });
                }
            }
        }
        let got = pose_correctives(&model, &p.pose).unwrap();
        for v in 0..100 {
            for c in 0..3 {
                let naive: f64 = (0..36).map(|f| model.pose_corrective_basis[[v, c, f]] * feature[f]).sum();
                assert_abs_diff_eq!(got[[v, c]], naive, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn forward_at_rest_is_template() {
        let model = generate_test_model(7, 60, 4, (3, 3)).unwrap();
        let mesh = forward(&model, &FlameParams::zeros(&model)).unwrap();
        assert_eq!(mesh.vertices, model.template);
    }

    #[test]
    fn root_only_weights_give_rigid_rotation_about_root() {
        let mut model = generate_test_model(7, 40, 2, (2, 2)).unwrap();
        model.skinning_weights.fill(0.0);
        model.skinning_weights.column_mut(0).fill(1.0);
        let mut params = FlameParams::zeros(&model);
        params.pose[2] = FRAC_PI_2;
        let mesh = forward(&model, &params).unwrap();
        let root = regress_joints(&model, &model.template).unwrap();
        let root = Vector3::new(root[[0, 0]], root[[0, 1]], root[[0, 2]]);
        let rz = axis_angle_to_rotation([0.0, 0.0, FRAC_PI_2]);
        for v in 0..40 {
            let rest = Vector3::new(model.template[[v, 0]], model.template[[v, 1]], model.template[[v, 2]]);
            let expected = root + rz * (rest - root);
            assert_abs_diff_eq!(mesh.vertex(v), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn transforms_are_proper_rotations() {
        let model = generate_test_model(7, 40, 4, (2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&model, &mut rng, 2.0);
        let rest = regress_joints(&model, &model.template).unwrap();
        let t = joint_transforms(&model, &rest, &p.pose).unwrap();
        for r in &t.rotations {
            assert_abs_diff_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-6);
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn forward_rejects_wrong_pose_length() {
        let model = generate_test_model(7, 20, 2, (2, 2)).unwrap();
        let mut p = FlameParams::zeros(&model);
        p.pose.push(0.0);
        assert!(forward(&model, &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn posed_vertex_in_hull_of_joint_images(seed in 0u64..1000) {
            let model = generate_test_model(7, 40, 4, (3, 3)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_params(&model, &mut rng, 1.0);
            let shaped = apply_blendshapes(&model, &p.shape, &p.expression).unwrap();
            let rest = regress_joints(&model, &shaped).unwrap();
            let posed_rest = &shaped + &pose_correctives(&model, &p.pose).unwrap();
            let t = joint_transforms(&model, &rest, &p.pose).unwrap();
            let mesh = forward(&model, &p).unwrap();
            for v in 0..40 {
                let x = Vector3::new(posed_rest[[v, 0]], posed_rest[[v, 1]], posed_rest[[v, 2]]);
                let images: Vec<_> = (0..5).map(|j| t.apply(j, &x)).collect();
                let out = mesh.vertex(v);
                for c in 0..3 {
                    let lo = images.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
                    let hi = images.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(out[c] >= lo - 1e-6 && out[c] <= hi + 1e-6);
                }
            }
        }

        #[test]
        fn rotations_orthonormal(aa in prop::array::uniform3(-10.0f64..10.0)) {
            let r = axis_angle_to_rotation(aa);
            prop_assert!(((r.transpose() * r) - Matrix3::identity()).abs().max() < 1e-6);
        }
    }
}
