#![allow(clippy::needless_range_loop)]

mod common;

use flameguide::assets::{generate_test_model, random_params};
use flameguide::kinematics::{apply_blendshapes, axis_angle_to_rotation};
use flameguide::{forward, FlameParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_matches_brute_force_lbs() {
    let model = generate_test_model(7, 100, 4, (10, 10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for draw in 0..100 {
        let params = random_params(&model, &mut rng, 1.0);
        let mesh = forward(&model, &params).unwrap();
        let oracle = common::brute_force_forward(&model, &params);
        for (v, expected) in oracle.iter().enumerate() {
            for c in 0..3 {
                let got = mesh.vertices[[v, c]];
                assert!(
                    (got - expected[c]).abs() <= 1e-5,
                    "draw {draw}, vertex {v}, coord {c}: {got} vs {}",
                    expected[c]
                );
            }
        }
    }
}

#[test]
fn zero_pose_is_exactly_the_blendshaped_mesh() {
    let model = generate_test_model(7, 100, 4, (10, 10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let mut params = random_params(&model, &mut rng, 1.0);
        params.pose.iter_mut().for_each(|p| *p = 0.0);
        let mesh = forward(&model, &params).unwrap();
        let shaped = apply_blendshapes(&model, &params.shape, &params.expression).unwrap();
        assert_eq!(mesh.vertices, shaped);
    }
    let neutral = forward(&model, &FlameParams::zeros(&model)).unwrap();
    assert_eq!(neutral.vertices, model.template);
}

#[test]
fn root_rotation_is_rigid_about_the_root_joint() {
    let model = generate_test_model(7, 100, 4, (10, 10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let params = random_params(&model, &mut rng, 1.0);
        let mut unrooted = params.clone();
        unrooted.pose[..3].fill(0.0);
        let base = forward(&model, &unrooted).unwrap();
        let rotated = forward(&model, &params).unwrap();
        let r = axis_angle_to_rotation([params.pose[0], params.pose[1], params.pose[2]]);
        let c = base.joints.row(0);
        let c = nalgebra::Vector3::new(c[0], c[1], c[2]);
        for v in 0..model.vertex_count() {
            let expected = r * (base.vertex(v) - c) + c;
            assert!((rotated.vertex(v) - expected).amax() <= 1e-5);
        }
    }
}
