mod common;

use nalgebra::Vector3;

use common::{brute_force_torques, pendulum, pendulum_oracle, random_configurations, tree_model};
use elastokin::calibration::CalibrationParams;
use elastokin::elastic::{
    apply_compliance, elastic_forward_kinematics, equilibrium_residual, gravity_torques, solve_equilibrium,
    solve_equilibrium_warm, Compliance, ComplianceSet, LinkTorques, PointMass, SolverSettings,
};
use elastokin::synthetic::reference_model;
use elastokin::{forward_kinematics, DhParams, Error, JointBinding};

fn tight() -> SolverSettings {
    SolverSettings {
        tol: 1e-14,
        max_iter: 1000,
        ..SolverSettings::default()
    }
}

#[test]
fn mass_at_reference_origin_gives_zero_torque() {
    let model = tree_model(
        &[(DhParams::default(), JointBinding::Revolute, None)],
        vec![PointMass {
            link: 0,
            mass: 1.0,
            position: Vector3::zeros(),
        }],
        Vector3::new(0.0, 0.0, -9.81),
    );
    let f = forward_kinematics(&model, &[0.3], &model.nominal_rho()).unwrap();
    let t = gravity_torques(&model, &f, &model.masses, &model.gravity);
    assert_eq!(t[0], Vector3::zeros());
}

#[test]
fn horizontal_lever_torque_magnitude() {
    let model = tree_model(
        &[(DhParams::default(), JointBinding::Revolute, None)],
        vec![PointMass {
            link: 0,
            mass: 1.0,
            position: Vector3::new(1.0, 0.0, 0.0),
        }],
        Vector3::new(0.0, 0.0, -9.81),
    );
    let f = forward_kinematics(&model, &[0.0], &model.nominal_rho()).unwrap();
    let t = gravity_torques(&model, &f, &model.masses, &model.gravity);
    // lever along x, force along −z: torque about +y
    assert!((t[0].y - 9.81).abs() < 1e-12);
    assert!(t[0].x.abs() < 1e-12 && t[0].z.abs() < 1e-12);
}

#[test]
fn torques_match_brute_force_double_loop() {
    let model = reference_model();
    let mut rho = model.nominal_rho();
    for (k, p) in rho.iter_mut().enumerate() {
        p.alpha += 2e-3 * (k as f64 * 1.3).sin();
        p.beta += 2e-3 * (k as f64 * 0.7).cos();
    }
    for q in random_configurations(&model, 200, 11) {
        let f = forward_kinematics(&model, &q, &rho).unwrap();
        let fast = gravity_torques(&model, &f, &model.masses, &model.gravity);
        let slow = brute_force_torques(&model, &f, &model.masses, &model.gravity);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).amax() < 1e-10 * (1.0 + b.amax()), "{a} vs {b}");
        }
    }
}

#[test]
fn torques_are_additive_over_mass_sets() {
    let model = reference_model();
    let (a, b) = model.masses.split_at(model.masses.len() / 2);
    for q in random_configurations(&model, 20, 12) {
        let f = forward_kinematics(&model, &q, &model.nominal_rho()).unwrap();
        let all = gravity_torques(&model, &f, &model.masses, &model.gravity);
        let ta = gravity_torques(&model, &f, a, &model.gravity);
        let tb = gravity_torques(&model, &f, b, &model.gravity);
        for i in 0..model.n_links() {
            assert!((all[i] - ta[i] - tb[i]).amax() < 1e-11);
        }
    }
}

#[test]
fn zero_masses_give_exactly_zero_torque() {
    let model = reference_model();
    let masses: Vec<PointMass> = model.masses.iter().map(|m| PointMass { mass: 0.0, ..*m }).collect();
    let q = &random_configurations(&model, 1, 13)[0];
    let f = forward_kinematics(&model, q, &model.nominal_rho()).unwrap();
    let t = gravity_torques(&model, &f, &masses, &model.gravity);
    assert!(t.iter().all(|v| *v == Vector3::zeros()));
}

#[test]
fn compliance_law_examples() {
    let rho0 = elastokin::DhParamSet(vec![DhParams::new(0.1, 0.2, 0.3, 0.4, 0.5)]);
    let torques = LinkTorques(vec![Vector3::new(1.0, 2.0, 10.0)]);
    let rigid = apply_compliance(&rho0, &ComplianceSet::zeros(1), &torques);
    assert_eq!(rigid, rho0);
    let soft = apply_compliance(&rho0, &ComplianceSet(vec![Compliance::new(0.0, 0.0, 0.001)]), &torques);
    assert!((soft[0].theta - 0.51).abs() < 1e-15);
    assert_eq!(soft[0].d, 0.1);
    assert_eq!(soft[0].r, 0.2);
}

#[test]
fn compliance_offset_is_linear_in_torque() {
    let model = reference_model();
    let rho0 = model.nominal_rho();
    let q = &random_configurations(&model, 1, 14)[0];
    let f = forward_kinematics(&model, q, &rho0).unwrap();
    let t = gravity_torques(&model, &f, &model.masses, &model.gravity);
    let t2 = LinkTorques(t.iter().map(|v| 2.0 * v).collect());
    let one = apply_compliance(&rho0, &model.compliance, &t);
    let two = apply_compliance(&rho0, &model.compliance, &t2);
    for ((a, b), p) in one.iter().zip(two.iter()).zip(rho0.iter()) {
        for (x, y, z) in [(a.alpha, b.alpha, p.alpha), (a.beta, b.beta, p.beta), (a.theta, b.theta, p.theta)] {
            assert!(((y - z) - 2.0 * (x - z)).abs() < 1e-15);
        }
    }
}

#[test]
fn pendulum_matches_bisection_oracle() {
    let (l, m, g) = (0.8, 3.0, 9.81);
    for (c, theta0, q) in [(1e-3, 0.0, 0.0), (5e-3, 0.2, -0.7), (2e-2, -0.4, 1.1), (1e-2, 0.0, 3.0)] {
        let model = pendulum(l, m, c, theta0, g);
        let r = solve_equilibrium(&model, &[q], &model.nominal_rho(), &model.compliance, &model.masses, &tight()).unwrap();
        let oracle = pendulum_oracle(l, m, c, theta0, g, q);
        assert!((r.rho_star[0].theta - oracle).abs() < 1e-12, "{} vs {oracle}", r.rho_star[0].theta);
    }
}

#[test]
fn horizontal_pendulum_sags() {
    let model = pendulum(1.0, 2.0, 1e-2, 0.0, 9.81);
    let r = solve_equilibrium(&model, &[0.0], &model.nominal_rho(), &model.compliance, &model.masses, &tight()).unwrap();
    assert!(r.rho_star[0].theta < 0.0);
    let tip = r.frames.frames[0].transform_point(&Vector3::new(1.0, 0.0, 0.0));
    assert!(tip.y < 0.0);
}

#[test]
fn outstretched_arm_tip_is_lower_than_rigid() {
    // two links in the vertical x/y plane, gravity along −y
    let links = [
        (DhParams::default(), JointBinding::Revolute, None),
        (DhParams::new(0.0, 0.5, 0.0, 0.0, 0.0), JointBinding::Revolute, Some(0)),
        (DhParams::new(0.0, 0.5, 0.0, 0.0, 0.0), JointBinding::None, Some(1)),
    ];
    let masses = vec![
        PointMass { link: 0, mass: 3.0, position: Vector3::new(0.25, 0.0, 0.0) },
        PointMass { link: 1, mass: 2.0, position: Vector3::new(0.25, 0.0, 0.0) },
        PointMass { link: 2, mass: 1.0, position: Vector3::zeros() },
    ];
    let mut model = tree_model(&links, masses, Vector3::new(0.0, -9.81, 0.0));
    model.compliance[0].theta = 1e-3;
    model.compliance[1].theta = 2e-3;
    let rigid = forward_kinematics(&model, &[0.0, 0.0], &model.nominal_rho()).unwrap();
    let theta = CalibrationParams::from_model(&model);
    let soft = elastic_forward_kinematics(&model, &[0.0, 0.0], &theta, &tight()).unwrap();
    assert!(soft.origin(2).y < rigid.origin(2).y - 1e-4);
}

#[test]
fn rigid_and_weightless_limits_return_rho0_exactly() {
    let model = reference_model();
    let rho0 = model.nominal_rho();
    let mut weightless = model.clone();
    weightless.gravity = Vector3::zeros();
    for q in random_configurations(&model, 50, 15) {
        let r = solve_equilibrium(&model, &q, &rho0, &ComplianceSet::zeros(model.n_links()), &model.masses, &SolverSettings::default()).unwrap();
        assert_eq!(r.rho_star, rho0);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.residual, 0.0);
        let w = solve_equilibrium(&weightless, &q, &rho0, &model.compliance, &model.masses, &SolverSettings::default()).unwrap();
        assert_eq!(w.rho_star, rho0);
    }
}

#[test]
fn converged_residual_is_below_tolerance() {
    let model = reference_model();
    let rho0 = model.nominal_rho();
    let s = SolverSettings::default();
    for q in random_configurations(&model, 200, 16) {
        let r = solve_equilibrium(&model, &q, &rho0, &model.compliance, &model.masses, &s).unwrap();
        let res = equilibrium_residual(&model, &q, &r.rho_star, &rho0, &model.compliance, &model.masses).unwrap();
        assert!(res <= s.tol, "{res}");
        assert!(r.residual <= s.tol);
    }
}

#[test]
fn fixed_point_does_not_depend_on_damping() {
    let model = reference_model();
    let rho0 = model.nominal_rho();
    let soft = model.compliance.scaled(10.0);
    let base = SolverSettings {
        tol: 1e-12,
        max_iter: 2000,
        adaptive: false,
        lambda: 1.0,
    };
    for q in random_configurations(&model, 50, 17) {
        let a = solve_equilibrium(&model, &q, &rho0, &soft, &model.masses, &base).unwrap();
        let b = solve_equilibrium(&model, &q, &rho0, &soft, &model.masses, &SolverSettings { lambda: 0.5, ..base }).unwrap();
        assert!(a.rho_star.max_abs_diff(&b.rho_star) <= 10.0 * base.tol);
        assert!(b.iterations > a.iterations);
    }
}

#[test]
fn warm_start_reaches_the_same_fixed_point() {
    let model = reference_model();
    let rho0 = model.nominal_rho();
    let q = &random_configurations(&model, 1, 18)[0];
    let cold = solve_equilibrium(&model, q, &rho0, &model.compliance, &model.masses, &tight()).unwrap();
    let warm = solve_equilibrium_warm(&model, q, &rho0, &model.compliance, &model.masses, &tight(), &cold.rho_star).unwrap();
    assert!(warm.iterations <= 2);
    assert!(warm.rho_star.max_abs_diff(&cold.rho_star) < 1e-14);
}

#[test]
fn stiff_models_contract_monotonically() {
    let model = reference_model();
    let rho0 = model.nominal_rho();
    for scale in [0.5, 1.0] {
        let c = model.compliance.scaled(scale);
        for q in random_configurations(&model, 1000, 19) {
            let r = solve_equilibrium(&model, &q, &rho0, &c, &model.masses, &tight()).unwrap();
            let d = r.per_iteration_tcp_delta();
            for w in d.windows(2) {
                // below ~1e-13 m the deltas are rounding noise
                if w[0] > 1e-13 {
                    assert!(w[1] < w[0], "{:?}", d);
                }
            }
        }
    }
}

#[test]
fn iteration_cap_reports_trace() {
    let model = reference_model();
    let q = &random_configurations(&model, 1, 20)[0];
    let s = SolverSettings {
        tol: 1e-300,
        max_iter: 7,
        ..SolverSettings::default()
    };
    match solve_equilibrium(&model, q, &model.nominal_rho(), &model.compliance, &model.masses, &s) {
        Err(Error::EquilibriumNotConverged { iterations, trace, .. }) => {
            assert_eq!(iterations, 7);
            assert_eq!(trace.len(), 7);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let model = reference_model();
    let q = model.zero_configuration();
    for s in [
        SolverSettings { lambda: 0.0, ..Default::default() },
        SolverSettings { lambda: 1.5, ..Default::default() },
        SolverSettings { tol: 0.0, ..Default::default() },
    ] {
        assert!(matches!(
            solve_equilibrium(&model, &q, &model.nominal_rho(), &model.compliance, &model.masses, &s),
            Err(Error::InvalidInput(_))
        ));
    }
}

#[test]
fn rigid_elastic_kinematics_equals_geometric() {
    let model = reference_model();
    let mut theta = CalibrationParams::from_model(&model);
    theta.compliance = ComplianceSet::zeros(model.n_links());
    for q in random_configurations(&model, 20, 21) {
        let a = elastic_forward_kinematics(&model, &q, &theta, &SolverSettings::default()).unwrap();
        let b = forward_kinematics(&model, &q, &theta.rho0).unwrap();
        assert_eq!(a, b);
    }
}
