use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LeastSquares, LmSettings, Termination};
use super::measure::{CalibrationProblem, Sample};
use super::params::{ActiveMask, CalibrationParams, Prior};
use super::report::{evaluate, ErrorReport, DEFAULT_BIN_WIDTH};
use crate::elastic::SolverSettings;
use crate::error::{Error, Result};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Initial guesses are drawn from `N(Θ_p, (spread·σ_p)²)`.
    pub start_spread: f64,
    pub lm: LmSettings,
    /// Equilibrium settings inside the optimizer. Must be far tighter than
    /// `fd_step` times the smallest measurement sensitivity.
    pub solver: SolverSettings,
    /// Forward-difference step in units of the prior sigma.
    pub fd_step: f64,
    /// Histogram bin width for the error reports (m).
    pub bin_width: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            seed: 0,
            start_spread: 1.0,
            lm: LmSettings::default(),
            solver: SolverSettings {
                lambda: 1.0,
                tol: 1e-14,
                max_iter: 500,
                adaptive: true,
            },
            fd_step: 1e-6,
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub theta: CalibrationParams,
    /// Whitened active parameters of the optimum.
    pub z: Vec<f64>,
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub theta_star: CalibrationParams,
    /// Objective value at `theta_star`.
    pub cost: f64,
    pub best_start: usize,
    pub active_parameters: usize,
    pub scalar_measurements: usize,
    pub starts: Vec<StartSummary>,
    /// Starts that failed, with the reason.
    pub failures: Vec<String>,
    /// Largest pairwise distance between optima, in prior-sigma units.
    pub multistart_spread: f64,
    pub train_error: ErrorReport,
    pub test_error: Option<ErrorReport>,
    /// Mean test error of every successful start's optimum, in start order (m).
    #[serde(default)]
    pub start_test_errors: Vec<f64>,
}

struct Whitened<'a>(&'a CalibrationProblem<'a>);

impl LeastSquares for Whitened<'_> {
    fn residuals(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.0.residuals(x)
    }
    fn jacobian(&self, x: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        self.0.jacobian(x)
    }
}

/// Initial guesses sampled from the (optionally widened) prior, one RNG
/// stream per start.
pub fn sample_starts(n_params: usize, n_starts: usize, seed: u64, spread: f64) -> Vec<Vec<f64>> {
    (0..n_starts)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            (0..n_params)
                .map(|_| spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect()
}

fn sample_key(s: &Sample) -> impl Iterator<Item = f64> + '_ {
    let marker = |m: Option<nalgebra::Vector3<f64>>| m.map_or([f64::NAN; 3], |v| [v.x, v.y, v.z]);
    s.q.iter().copied().chain(marker(s.y_right)).chain(marker(s.y_left))
}

fn canonical_order(dataset: &[Sample]) -> Vec<Sample> {
    let mut v = dataset.to_vec();
    v.sort_by(|a, b| {
        sample_key(a)
            .zip(sample_key(b))
            .map(|(x, y)| x.total_cmp(&y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    v
}

/// MAP identification of the active parameters with multistart
/// Levenberg–Marquardt. Frozen parameters keep their prior-mean values.
pub fn calibrate(
    model: &RobotModel,
    dataset: &[Sample],
    prior: &Prior,
    mask: &ActiveMask,
    options: &CalibrationOptions,
) -> Result<CalibrationReport> {
    if options.n_starts == 0 {
        return Err(Error::InvalidInput("at least one start is required".into()));
    }
    // A fixed summation order makes the optimum independent of sample order
    // down to the last bit, not just up to the optimizer's tolerance.
    let canonical = canonical_order(dataset);
    let problem = CalibrationProblem::new(model, &canonical, prior, mask, options.solver, options.fd_step)?;
    if problem.n_measurements() < problem.n_params() {
        log::warn!(
            "{} scalar measurements for {} active parameters; the prior regularizes the rest",
            problem.n_measurements(),
            problem.n_params()
        );
    }
    let starts = sample_starts(problem.n_params(), options.n_starts, options.seed, options.start_spread);
    let runs: Vec<std::result::Result<StartSummary, String>> = starts
        .par_iter()
        .enumerate()
        .map(|(index, z0)| {
            let report = levenberg_marquardt(&Whitened(&problem), z0, &options.lm).map_err(|e| format!("start {index}: {e}"))?;
            if report.termination == Termination::DampingOverflow || !report.cost.is_finite() {
                return Err(format!("start {index}: {:?} at cost {:.6e}", report.termination, report.cost));
            }
            let mut theta = problem.params_from_z(&report.x);
            theta.closure.canonicalize();
            Ok(StartSummary {
                index,
                cost: report.cost,
                iterations: report.iterations,
                termination: report.termination,
                theta,
                z: report.x,
                cost_trace: report.cost_trace,
            })
        })
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => failures.push(e),
        }
    }
    if ok.is_empty() {
        return Err(Error::OptimizationFailed { traces: failures });
    }
    let best = ok
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one start succeeded");
    let mut spread = 0.0f64;
    for (i, a) in ok.iter().enumerate() {
        for b in &ok[i + 1..] {
            let d = a.z.iter().zip(&b.z).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            spread = spread.max(d);
        }
    }
    let eval_settings = SolverSettings {
        tol: 1e-12,
        ..options.solver
    };
    let train_error = evaluate(model, &best.theta, dataset, &eval_settings, options.bin_width)?;
    Ok(CalibrationReport {
        theta_star: best.theta.clone(),
        cost: best.cost,
        best_start: best.index,
        active_parameters: problem.n_params(),
        scalar_measurements: problem.n_measurements(),
        multistart_spread: spread,
        starts: ok,
        failures,
        train_error,
        test_error: None,
        start_test_errors: Vec::new(),
    })
}

/// Calibrates and evaluates on a held-out set in one call.
pub fn calibrate_and_test(
    model: &RobotModel,
    train: &[Sample],
    test: &[Sample],
    prior: &Prior,
    mask: &ActiveMask,
    options: &CalibrationOptions,
) -> Result<CalibrationReport> {
    let mut report = calibrate(model, train, prior, mask, options)?;
    let settings = SolverSettings {
        tol: 1e-12,
        ..options.solver
    };
    report.test_error = Some(evaluate(model, &report.theta_star, test, &settings, options.bin_width)?);
    if report.starts.len() > 1 {
        report.start_test_errors = report
            .starts
            .iter()
            .map(|s| evaluate(model, &s.theta, test, &settings, options.bin_width).map(|e| e.combined.mean))
            .collect::<Result<_>>()?;
    }
    Ok(report)
}
