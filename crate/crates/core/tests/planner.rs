use nalgebra::Vector3;

use elastokin::calibration::CalibrationParams;
use elastokin::elastic::ComplianceSet;
use elastokin::planner::{
    plan, verify_equilibrium_at_solution, Goal, KinematicsMode, PlannerObjective, PlannerSettings, PlanningProblem,
};
use elastokin::synthetic::{planning_suite, reference_model};
use elastokin::RobotModel;

fn settings(mode: KinematicsMode) -> PlannerSettings {
    PlannerSettings {
        mode,
        ..Default::default()
    }
}

fn suite(model: &RobotModel, n: usize) -> Vec<PlanningProblem> {
    planning_suite(model, n, 6, 21).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn rigid_elastic_planner_equals_geometric_planner() {
    let model = reference_model();
    let rigid = CalibrationParams {
        compliance: ComplianceSet::zeros(model.n_links()),
        ..CalibrationParams::from_model(&model)
    };
    for p in suite(&model, 4) {
        let g = plan(&model, &rigid, &p.start, &p.goal, &p.objective, &settings(KinematicsMode::Geometric)).unwrap();
        let e = plan(&model, &rigid, &p.start, &p.goal, &p.objective, &settings(KinematicsMode::Elastic)).unwrap();
        assert_eq!(g.outer_iterations, e.outer_iterations, "{}", p.name);
        assert_eq!(bits(&g.objective_trace), bits(&e.objective_trace));
        for (a, b) in g.path.waypoints.iter().zip(&e.path.waypoints) {
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(e.equilibrium_residual_at_solution, 0.0);
    }
}

#[test]
fn endpoints_stay_pinned() {
    let model = reference_model();
    let theta = CalibrationParams::from_model(&model);
    for p in suite(&model, 4) {
        let r = plan(&model, &theta, &p.start, &p.goal, &p.objective, &settings(KinematicsMode::Elastic)).unwrap();
        assert_eq!(r.path.waypoints.first().unwrap(), &p.start);
        match &p.goal {
            Goal::Configuration(end) => {
                assert!(r.path.fixed_end);
                assert_eq!(r.path.waypoints.last().unwrap(), end);
            }
            Goal::Position { .. } => assert!(!r.path.fixed_end),
        }
        assert_eq!(r.path.waypoints.len(), PlannerSettings::default().n_waypoints);
        assert_eq!(r.rho.len(), r.path.waypoints.len());
    }
}

#[test]
fn start_equal_to_goal_on_rigid_model_stops_at_once() {
    let model = reference_model();
    let rigid = CalibrationParams {
        compliance: ComplianceSet::zeros(model.n_links()),
        ..CalibrationParams::from_model(&model)
    };
    let start = model.zero_configuration();
    let objective = PlannerObjective::default();
    let r = plan(&model, &rigid, &start, &Goal::Configuration(start.clone()), &objective, &settings(KinematicsMode::Elastic)).unwrap();
    assert_eq!(r.outer_iterations, 1);
    assert!(r.path.waypoints.iter().all(|w| w == &start));
}

#[test]
fn geometric_objective_never_increases() {
    let model = reference_model();
    let theta = CalibrationParams::from_model(&model);
    for p in suite(&model, 4) {
        let r = plan(&model, &theta, &p.start, &p.goal, &p.objective, &settings(KinematicsMode::Geometric)).unwrap();
        for w in r.objective_trace.windows(2) {
            assert!(w[1] <= w[0], "{}: {} -> {}", p.name, w[0], w[1]);
        }
    }
}

#[test]
fn position_goal_is_reached() {
    let model = reference_model();
    let theta = CalibrationParams::from_model(&model);
    let [right, _] = model.tcp_links();
    let start = suite(&model, 1).remove(0).start;
    let f0 = elastokin::forward_kinematics(&model, &start, &model.nominal_rho()).unwrap();
    let target = f0.origin(right) + Vector3::new(0.05, 0.03, -0.04);
    let goal = Goal::Position {
        link: right,
        offset: Vector3::zeros(),
        target,
    };
    let r = plan(&model, &theta, &start, &goal, &PlannerObjective::default(), &settings(KinematicsMode::Elastic)).unwrap();
    let last = r.path.waypoints.last().unwrap();
    let f = elastokin::forward_kinematics(&model, last, r.rho.last().unwrap()).unwrap();
    assert!((f.origin(right) - target).norm() < 5e-3, "{}", (f.origin(right) - target).norm());
}

#[test]
fn one_update_per_iteration_keeps_equilibrium() {
    let model = reference_model();
    let theta = CalibrationParams::from_model(&model);
    for p in suite(&model, 4) {
        let r = plan(&model, &theta, &p.start, &p.goal, &p.objective, &settings(KinematicsMode::Elastic)).unwrap();
        assert_eq!(r.torque_updates, r.outer_iterations * r.path.waypoints.len());
        let check = verify_equilibrium_at_solution(&model, &theta, &r, 1e-13).unwrap();
        assert!(check.max_tcp_discrepancy < 1e-4, "{}: {}", p.name, check.max_tcp_discrepancy);
        assert!(check.max_rho_residual < 1e-5);
        assert!(r.equilibrium_residual_at_solution < 1e-5);
    }
}

#[test]
fn twenty_times_softer_still_agrees_with_full_solve() {
    let model = reference_model();
    let base = CalibrationParams::from_model(&model);
    let soft = CalibrationParams {
        compliance: base.compliance.scaled(20.0),
        ..base.clone()
    };
    for p in suite(&model, 3) {
        let r = plan(&model, &soft, &p.start, &p.goal, &p.objective, &settings(KinematicsMode::Elastic)).unwrap();
        let check = verify_equilibrium_at_solution(&model, &soft, &r, 1e-13).unwrap();
        assert!(check.max_tcp_discrepancy < 1e-3, "{}: {}", p.name, check.max_tcp_discrepancy);
    }
}

#[test]
fn invalid_requests_are_rejected() {
    let model = reference_model();
    let theta = CalibrationParams::from_model(&model);
    let start = model.zero_configuration();
    let goal = Goal::Configuration(start.clone());
    let objective = PlannerObjective::default();
    let s = settings(KinematicsMode::Elastic);
    let short = elastokin::Configuration(vec![0.0; 3]);
    assert!(plan(&model, &theta, &short, &goal, &objective, &s).is_err());
    assert!(plan(&model, &theta, &start, &Goal::Configuration(short), &objective, &s).is_err());
    let mut outside = start.clone();
    outside[0] = model.joint_limits[0].upper + 1.0;
    assert!(plan(&model, &theta, &outside, &goal, &objective, &s).is_err());
    let one = PlannerSettings { n_waypoints: 1, ..s };
    assert!(plan(&model, &theta, &start, &goal, &objective, &one).is_err());
    let bad_link = Goal::Position {
        link: model.n_links(),
        offset: Vector3::zeros(),
        target: Vector3::zeros(),
    };
    assert!(plan(&model, &theta, &start, &bad_link, &objective, &s).is_err());
    let negative = PlannerObjective {
        smoothness: -1.0,
        ..Default::default()
    };
    assert!(plan(&model, &theta, &start, &goal, &negative, &s).is_err());
}
