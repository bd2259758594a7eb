mod common;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use common::{chain, factor_product, frame_distance, oracle_frame, random_configurations, tree_model};
use elastokin::kinematics::{dh_transform, position_jacobian};
use elastokin::synthetic::reference_model;
use elastokin::{forward_kinematics, DhLink, DhParams, JointBinding};

fn link(p: DhParams) -> DhLink {
    DhLink {
        name: "l".into(),
        params: p,
        binding: JointBinding::Revolute,
        joint_index: Some(0),
        parent: None,
    }
}

#[test]
fn zero_parameters_give_identity() {
    let t = dh_transform(&link(DhParams::default()), 0.0);
    assert_eq!(t.rotation, Matrix3::identity());
    assert_eq!(t.translation, Vector3::zeros());
}

#[test]
fn pure_d_is_translation_along_z() {
    let t = dh_transform(&link(DhParams::new(1.0, 0.0, 0.0, 0.0, 0.0)), 0.0);
    assert_eq!(t.rotation, Matrix3::identity());
    assert_eq!(t.translation, Vector3::new(0.0, 0.0, 1.0));
}

#[test]
fn alpha_quarter_turn_with_r() {
    let t = dh_transform(&link(DhParams::new(0.0, 0.3, FRAC_PI_2, 0.0, 0.0)), 0.0);
    // Rot_x(π/2) · Trans_x(0.3): the offset along x is unaffected by the rotation
    let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    assert!((t.rotation - expected).amax() < 1e-15);
    assert!((t.translation - Vector3::new(0.3, 0.0, 0.0)).amax() < 1e-15);
}

#[test]
fn prismatic_binding_adds_to_d() {
    let mut l = link(DhParams::new(0.2, 0.1, 0.3, -0.2, 0.4));
    l.binding = JointBinding::Prismatic;
    let t = dh_transform(&l, 0.5);
    let o = factor_product(&DhParams::new(0.7, 0.1, 0.3, -0.2, 0.4), JointBinding::None, 0.0);
    assert!(frame_distance(&t, &o) < 1e-14);
}

proptest! {
    #[test]
    fn dh_transform_matches_factor_product(
        d in -1.0..1.0f64, r in -1.0..1.0f64, a in -3.2..3.2f64, b in -3.2..3.2f64, th in -3.2..3.2f64, q in -3.2..3.2f64
    ) {
        let p = DhParams::new(d, r, a, b, th);
        let t = dh_transform(&link(p), q);
        prop_assert!(frame_distance(&t, &factor_product(&p, JointBinding::Revolute, q)) < 1e-14);
    }
}

#[test]
fn single_link_chain_equals_link_transform() {
    let p = DhParams::new(0.1, 0.2, 0.3, 0.4, 0.5);
    let model = chain(&[p]);
    let f = forward_kinematics(&model, &[0.7], &model.nominal_rho()).unwrap();
    assert_eq!(f.frames[0], dh_transform(&model.links[0], 0.7));
}

#[test]
fn planar_two_link_quarter_turns() {
    let model = chain(&[DhParams::new(0.0, 0.0, 0.0, 0.0, 0.0), DhParams::new(0.0, 1.0, 0.0, 0.0, 0.0)]);
    // A third fixed link carries the tool one unit along the last x axis.
    let mut links: Vec<_> = model.links.iter().map(|l| (l.params, l.binding, l.parent)).collect();
    links.push((DhParams::new(0.0, 1.0, 0.0, 0.0, 0.0), JointBinding::None, Some(1)));
    let model = tree_model(&links, Vec::new(), Vector3::zeros());
    let f = forward_kinematics(&model, &[FRAC_PI_2, FRAC_PI_2], &model.nominal_rho()).unwrap();
    assert!((f.origin(2) - Vector3::new(-1.0, 1.0, 0.0)).amax() < 1e-15);
}

#[test]
fn reference_model_matches_factor_product_oracle() {
    let model = reference_model();
    let rho = model.nominal_rho();
    let mut qs = vec![model.zero_configuration()];
    qs.extend(random_configurations(&model, 50, 3));
    for q in &qs {
        let f = forward_kinematics(&model, q, &rho).unwrap();
        for i in 0..model.n_links() {
            let o = oracle_frame(&model, q, &rho, i);
            assert!(frame_distance(&f.frames[i], &o) < 1e-12, "link {i}");
        }
    }
}

#[test]
fn frames_compose_with_parent() {
    let model = reference_model();
    let rho = model.nominal_rho();
    for q in random_configurations(&model, 20, 4) {
        let f = forward_kinematics(&model, &q, &rho).unwrap();
        for (i, l) in model.links.iter().enumerate() {
            let local = dh_transform(l, l.joint_index.map_or(0.0, |j| q[j]));
            let composed = &f.parent_frame(l.parent) * &local;
            assert_eq!(composed, f.frames[i]);
        }
    }
}

#[test]
fn axes_are_rotation_columns_and_orthonormal() {
    let model = reference_model();
    let mut rho = model.nominal_rho();
    for (k, p) in rho.iter_mut().enumerate() {
        p.beta += 0.01 * k as f64;
    }
    for q in random_configurations(&model, 100, 5) {
        let f = forward_kinematics(&model, &q, &rho).unwrap();
        assert_eq!(f.len(), model.n_links());
        for i in 0..f.len() {
            let r = f.frames[i].rotation;
            assert!((f.x_axis(i) - r.column(0)).amax() <= 1e-12);
            assert!((f.z_axis(i) - r.column(2)).amax() <= 1e-12);
            let (ortho, det) = f.frames[i].orthonormality_error();
            assert!(ortho <= 1e-10 && det <= 1e-10);
            assert!((r.transpose() * r - Matrix3::identity()).norm() <= 1e-10);
            assert!((r.determinant() - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn forward_kinematics_is_deterministic() {
    let model = reference_model();
    let q = &random_configurations(&model, 1, 6)[0];
    let a = forward_kinematics(&model, q, &model.nominal_rho()).unwrap();
    let b = forward_kinematics(&model, q, &model.nominal_rho()).unwrap();
    for (x, y) in a.frames.iter().zip(&b.frames) {
        assert_eq!(x.rotation.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.rotation.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(x.translation.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.translation.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let model = reference_model();
    assert!(forward_kinematics(&model, &[0.0; 3], &model.nominal_rho()).is_err());
    let mut rho = model.nominal_rho();
    rho.pop();
    assert!(forward_kinematics(&model, &model.zero_configuration(), &rho).is_err());
}

fn central_difference(model: &elastokin::RobotModel, q: &[f64], rho: &elastokin::DhParamSet, link: usize, h: f64) -> nalgebra::Matrix3xX<f64> {
    let mut j = nalgebra::Matrix3xX::zeros(q.len());
    for k in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[k] += h;
        qm[k] -= h;
        let p = forward_kinematics(model, &qp, rho).unwrap().origin(link);
        let m = forward_kinematics(model, &qm, rho).unwrap().origin(link);
        j.set_column(k, &((p - m) / (2.0 * h)));
    }
    j
}

#[test]
fn single_joint_jacobian_column() {
    let mut links = vec![(DhParams::default(), JointBinding::Revolute, None)];
    links.push((DhParams::new(0.0, 1.0, 0.0, 0.0, 0.0), JointBinding::None, Some(0)));
    let model = tree_model(&links, Vec::new(), Vector3::zeros());
    let rho = model.nominal_rho();
    let j = position_jacobian(&model, &[0.0], &rho, 1).unwrap();
    let fd = central_difference(&model, &[0.0], &rho, 1, 1e-6);
    assert!((j.column(0) - Vector3::new(0.0, 1.0, 0.0)).amax() < 1e-15);
    assert!((j - fd).amax() < 1e-9);
}

#[test]
fn off_branch_joints_have_zero_columns() {
    let model = reference_model();
    let rho = model.nominal_rho();
    let [right, left] = model.tcp_links();
    let q = &random_configurations(&model, 1, 7)[0];
    let j = position_jacobian(&model, q, &rho, right).unwrap();
    let mut zero_cols = 0;
    for k in 0..model.n_joints() {
        let jl = model.joint_link(k).unwrap();
        if !model.is_ancestor(jl, right) {
            assert_eq!(j.column(k).amax(), 0.0);
            zero_cols += 1;
        }
        if model.is_ancestor(jl, left) && !model.is_ancestor(jl, right) {
            assert_eq!(j.column(k).amax(), 0.0);
        }
    }
    assert!(zero_cols > 0);
}

#[test]
fn position_jacobian_matches_finite_differences_with_deflected_rho() {
    let model = reference_model();
    let mut rho = model.nominal_rho();
    for (k, p) in rho.iter_mut().enumerate() {
        p.alpha += 1e-3 * (k as f64).sin();
        p.beta += 1e-3 * (k as f64).cos();
    }
    for q in random_configurations(&model, 20, 8) {
        for link in model.tcp_links() {
            let j = position_jacobian(&model, &q, &rho, link).unwrap();
            let fd = central_difference(&model, &q, &rho, link, 1e-6);
            let err = j.iter().zip(fd.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / (1.0 + b.abs())));
            assert!(err < 1e-6, "{err}");
        }
    }
}
