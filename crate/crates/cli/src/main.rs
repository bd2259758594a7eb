use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use elastokin::calibration::{
    ablation_study, calibrate, calibrate_and_test, evaluate, set_size_study, AblationMode, CalibrationOptions,
    CalibrationParams, CalibrationReport, ErrorReport, ParamGroup, ParamLayout, Prior, PriorWidths, Sample,
    DEFAULT_SIGMA_M,
};
use elastokin::elastic::{ComplianceSet, SolverSettings};
use elastokin::io::{self, IngestConfig};
use elastokin::planner::{
    compensation_benchmark, plan, verify_equilibrium_at_solution, KinematicsMode, PlanningProblem, PlannerSettings,
};
use elastokin::selection::{order_poses, sample_feasible, tour_cost, JointMetric, SamplingOptions};
use elastokin::synthetic::{
    convergence_study, ground_truth, measure_dataset, planning_suite, reference_model, search_perturbation_scale,
    TruthSpec,
};
use elastokin::{Error, RobotModel};

const THREADS_ENV: &str = "ELASTOKIN_THREADS";

#[derive(Parser)]
#[command(name = "elastokin", version, about = "Elastic kinematics: calibration, pose selection and planning studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a ground-truth sidecar.
    Simulate(SimulateArgs),
    /// MAP calibration with multistart.
    Calibrate(CalibrateArgs),
    /// Marker errors of a parameter set on a dataset.
    Evaluate(EvaluateArgs),
    /// Calibrate with parameter groups added or removed one at a time.
    Ablation(AblationArgs),
    /// Test error versus calibration set size.
    SetSize(SetSizeArgs),
    /// Sample feasible measurement poses and order them into tours.
    SelectPoses(SelectPosesArgs),
    /// Per-iteration behaviour of the equilibrium solver.
    ConvergenceStudy(ConvergenceArgs),
    /// Plan paths for the problems of a problem file.
    Plan(PlanArgs),
    /// Rigid versus elastic planner over a problem set.
    Benchmark(BenchmarkArgs),
    /// Write the bundled synthetic model, a default prior and a problem set.
    ExportModel(ExportArgs),
}

#[derive(Args)]
struct Common {
    /// Robot model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolverFlags {
    /// Damping of the equilibrium iteration.
    #[arg(long)]
    lambda: Option<f64>,
    /// Equilibrium tolerance (rad).
    #[arg(long)]
    tol: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, mut s: SolverSettings) -> anyhow::Result<SolverSettings> {
        if let Some(l) = self.lambda {
            s.lambda = l;
        }
        if let Some(t) = self.tol {
            s.tol = t;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct CalibrationFlags {
    /// Prior file (JSON); defaults to the nominal model without elasticity.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Column mapping for datasets not written by this tool.
    #[arg(long)]
    ingest: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Measurement noise (m).
    #[arg(long, default_value_t = DEFAULT_SIGMA_M)]
    sigma_m: f64,
    /// Ground-truth description (JSON); defaults to the built-in one.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Multiplier on the geometric perturbation of the truth.
    #[arg(long)]
    geometry_scale: Option<f64>,
    /// Search the geometry scale until the nominal test error lies in this
    /// range (mm), e.g. 18,22. Requires --split.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    target_error_mm: Option<Vec<f64>>,
    /// Also write the first N samples as train.csv and the rest as test.csv.
    #[arg(long)]
    split: Option<usize>,
    /// Multiplier on the model's compliances for the truth.
    #[arg(long, default_value_t = 1.0)]
    compliance_scale: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// Held-out dataset for the test error.
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    cal: CalibrationFlags,
    /// Active groups: full, geometric, or a comma list of closure,
    /// joint_offsets, geometry, joint_elasticity, transversal_elasticity, masses.
    #[arg(long, default_value = "full")]
    groups: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// Parameter file; defaults to the model's own values.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    ingest: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// add_one or leave_one_out
    #[arg(long, default_value = "add_one")]
    mode: String,
    #[command(flatten)]
    cal: CalibrationFlags,
}

#[derive(Args)]
struct SetSizeArgs {
    #[command(flatten)]
    common: Common,
    /// Pool the subsets are drawn from.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250,300")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value = "full")]
    groups: String,
    #[command(flatten)]
    cal: CalibrationFlags,
}

#[derive(Args)]
struct SelectPosesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Stiffness multipliers; compliance is divided by each.
    #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.05")]
    stiffness_scale: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    problems: PathBuf,
    /// Only plan the problem with this name.
    #[arg(long)]
    problem: Option<String>,
    /// Divide the compliance by this.
    #[arg(long, default_value_t = 1.0)]
    stiffness_scale: f64,
    /// Ignore elasticity while planning.
    #[arg(long)]
    geometric: bool,
    /// Damping of the per-iteration DH update.
    #[arg(long)]
    lambda: Option<f64>,
    /// Joint step tolerance (rad).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Problem file; without it a random suite is generated.
    #[arg(long)]
    problems: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    suite_size: usize,
    #[arg(long, default_value_t = 10)]
    obstacles: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,0.05")]
    stiffness_scale: Vec<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    suite_size: usize,
    #[arg(long, default_value_t = 10)]
    obstacles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let out_dir = cli.command.out_dir().to_path_buf();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(err) if err.is_numerical() => {
                    match write_diagnostics(&out_dir, err, &e) {
                        Ok(p) => eprintln!("diagnostics written to {}", p.display()),
                        Err(w) => eprintln!("could not write diagnostics: {w:#}"),
                    }
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
    if n == 0 {
        bail!("{THREADS_ENV} must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn write_diagnostics(dir: &Path, err: &Error, full: &anyhow::Error) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let detail = match err {
        Error::EquilibriumNotConverged {
            iterations,
            residual,
            trace,
        } => json!({"kind": "equilibrium_not_converged", "iterations": iterations, "residual": residual, "trace": trace}),
        Error::OptimizationFailed { traces } => json!({"kind": "optimization_failed", "starts": traces}),
        Error::Infeasible { attempts, accepted } => {
            json!({"kind": "infeasible", "attempts": attempts, "accepted": accepted})
        }
        Error::PlannerNotConverged { iterations, trace } => {
            json!({"kind": "planner_not_converged", "iterations": iterations, "objective_trace": trace})
        }
        other => json!({"kind": "other", "message": other.to_string()}),
    };
    let path = dir.join("diagnostics.json");
    io::write_json(&path, &json!({"error": format!("{full:#}"), "detail": detail}))?;
    Ok(path)
}

impl Command {
    fn out_dir(&self) -> &Path {
        match self {
            Command::Simulate(a) => &a.common.out,
            Command::Calibrate(a) => &a.common.out,
            Command::Evaluate(a) => &a.common.out,
            Command::Ablation(a) => &a.common.out,
            Command::SetSize(a) => &a.common.out,
            Command::SelectPoses(a) => &a.common.out,
            Command::ConvergenceStudy(a) => &a.common.out,
            Command::Plan(a) => &a.common.out,
            Command::Benchmark(a) => &a.common.out,
            Command::ExportModel(a) => &a.out,
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    std::fs::create_dir_all(cmd.out_dir()).with_context(|| format!("creating {}", cmd.out_dir().display()))?;
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablation(a) => ablation(a),
        Command::SetSize(a) => set_size(a),
        Command::SelectPoses(a) => select_poses(a),
        Command::ConvergenceStudy(a) => convergence(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Benchmark(a) => benchmark(a),
        Command::ExportModel(a) => export(a),
    }
}

fn load_model(path: &Path) -> anyhow::Result<RobotModel> {
    io::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_samples(path: &Path, model: &RobotModel, ingest: Option<&Path>) -> anyhow::Result<Vec<Sample>> {
    let samples = match ingest {
        Some(cfg) => {
            let cfg: IngestConfig = io::read_json(cfg).with_context(|| format!("reading {}", cfg.display()))?;
            if cfg.joints.len() != model.n_joints() {
                bail!("ingest config maps {} joints, model has {}", cfg.joints.len(), model.n_joints());
            }
            io::read_dataset_with(path, &cfg)
        }
        None => io::read_dataset(path, model.n_joints()),
    };
    samples.with_context(|| format!("reading dataset {}", path.display()))
}

fn load_theta(path: Option<&Path>, model: &RobotModel) -> anyhow::Result<CalibrationParams> {
    match path {
        Some(p) => io::load_params(p, model).with_context(|| format!("loading parameters {}", p.display())),
        None => Ok(CalibrationParams::from_model(model)),
    }
}

/// The calibration starting model has no elasticity; the prior supplies it.
fn rigid(model: &RobotModel) -> RobotModel {
    model.with_compliance(ComplianceSet::zeros(model.n_links()))
}

fn load_prior(path: Option<&Path>, model: &RobotModel) -> anyhow::Result<Prior> {
    match path {
        Some(p) => io::load_prior(p, model).with_context(|| format!("loading prior {}", p.display())),
        None => Ok(Prior::nominal(model, &PriorWidths::default(), DEFAULT_SIGMA_M)),
    }
}

fn parse_groups(s: &str) -> anyhow::Result<BTreeSet<ParamGroup>> {
    Ok(match s.trim() {
        "full" => ParamGroup::full_model(),
        "geometric" => ParamGroup::geometric_model(),
        list => list.split(',').map(ParamGroup::parse).collect::<Result<_, _>>()?,
    })
}

fn calibration_options(flags: &CalibrationFlags, seed: u64) -> anyhow::Result<CalibrationOptions> {
    if flags.starts == 0 {
        bail!("--starts must be at least 1");
    }
    let defaults = CalibrationOptions::default();
    Ok(CalibrationOptions {
        n_starts: flags.starts,
        seed,
        solver: flags.solver.apply(defaults.solver)?,
        ..defaults
    })
}

fn mm(v: f64) -> String {
    format!("{:.3}", v * 1e3)
}

fn print_error_table(rows: &[(&str, &ErrorReport)]) {
    println!("{:<10} {:>10} {:>10} {:>10} {:>8}", "set", "mean [mm]", "rms [mm]", "max [mm]", "markers");
    for (name, r) in rows {
        let c = &r.combined;
        println!("{:<10} {:>10} {:>10} {:>10} {:>8}", name, mm(c.mean), mm(c.rms), mm(c.max), c.count);
    }
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let model = load_model(&a.common.model)?;
    if a.n == 0 {
        bail!("--n must be positive");
    }
    if let Some(k) = a.split {
        if k == 0 || k >= a.n {
            bail!("--split must lie in 1..{}", a.n);
        }
    }
    let mut spec: TruthSpec = match &a.truth {
        Some(p) => io::read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => TruthSpec::default(),
    };
    spec.compliance_scale *= a.compliance_scale;
    let qs = sample_feasible(&model, a.n, a.common.seed, &SamplingOptions::default())?.configurations;
    let nominal = rigid(&model);
    let mut search = None;
    if let Some(range) = &a.target_error_mm {
        let Some(k) = a.split else {
            bail!("--target-error-mm needs --split");
        };
        let prior = Prior::nominal(&nominal, &PriorWidths::default(), a.sigma_m.max(1e-6));
        let options = CalibrationOptions {
            n_starts: 1,
            start_spread: 0.0,
            ..CalibrationOptions::default()
        };
        let (train_q, test_q) = qs.split_at(k);
        let s = search_perturbation_scale(
            &nominal,
            &spec,
            train_q,
            test_q,
            a.sigma_m,
            a.common.seed,
            &prior,
            &options,
            (range[0] * 1e-3, range[1] * 1e-3),
        )?;
        spec = spec.with_geometry_scale(s.geometry_scale);
        search = Some(s);
    } else if let Some(s) = a.geometry_scale {
        spec = spec.with_geometry_scale(s);
    }
    let truth = ground_truth(&model, &spec);
    let out = &a.common.out;
    let samples = match a.split {
        Some(k) => {
            let train = measure_dataset(&model, &truth, &qs[..k], a.sigma_m, a.common.seed)?;
            let test = measure_dataset(&model, &truth, &qs[k..], a.sigma_m, a.common.seed ^ 0x5eed)?;
            io::write_dataset(&out.join("train.csv"), model.n_joints(), &train)?;
            io::write_dataset(&out.join("test.csv"), model.n_joints(), &test)?;
            [train, test].concat()
        }
        None => measure_dataset(&model, &truth, &qs, a.sigma_m, a.common.seed)?,
    };
    io::write_dataset(&out.join("dataset.csv"), model.n_joints(), &samples)?;
    io::save_params(&truth, &out.join("truth.json"))?;
    io::write_json(
        &out.join("truth_spec.json"),
        &json!({"truth": spec, "sigma_m": a.sigma_m, "seed": a.common.seed, "n": a.n, "split": a.split, "scale_search": search}),
    )?;
    let markers: usize = samples.iter().map(|s| s.n_markers()).sum();
    println!("samples  {}", samples.len());
    println!("markers  {markers}");
    println!("sigma_m  {} mm", mm(a.sigma_m));
    if let Some(s) = &search {
        println!("geometry scale {:.4} (nominal test error {} mm)", s.geometry_scale, mm(s.nominal_error));
    }
    Ok(())
}

fn write_report_files(dir: &Path, report: &CalibrationReport) -> anyhow::Result<()> {
    io::save_params(&report.theta_star, &dir.join("theta.json"))?;
    io::write_json(&dir.join("report.json"), report)?;
    io::write_atomic(&dir.join("train_residuals.csv"), io::residuals_csv(&report.train_error)?.as_bytes())?;
    io::write_atomic(&dir.join("train_histogram.csv"), io::histogram_csv(&report.train_error.histogram)?.as_bytes())?;
    if let Some(t) = &report.test_error {
        io::write_atomic(&dir.join("test_residuals.csv"), io::residuals_csv(t)?.as_bytes())?;
        io::write_atomic(&dir.join("test_histogram.csv"), io::histogram_csv(&t.histogram)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> anyhow::Result<()> {
    let model = rigid(&load_model(&a.common.model)?);
    let train = load_samples(&a.dataset, &model, a.cal.ingest.as_deref())?;
    let prior = load_prior(a.cal.prior.as_deref(), &model)?;
    let options = calibration_options(&a.cal, a.common.seed)?;
    let mask = ParamLayout::new(&model, &prior.mean).mask(&parse_groups(&a.groups)?);
    let report = match &a.test {
        Some(t) => {
            let test = load_samples(t, &model, a.cal.ingest.as_deref())?;
            calibrate_and_test(&model, &train, &test, &prior, &mask, &options)?
        }
        None => calibrate(&model, &train, &prior, &mask, &options)?,
    };
    write_report_files(&a.common.out, &report)?;
    println!(
        "active parameters {}  measurements {}  starts {}/{}  best {}  cost {:.6e}",
        report.active_parameters,
        report.scalar_measurements,
        report.starts.len(),
        options.n_starts,
        report.best_start,
        report.cost
    );
    let mut rows = vec![("train", &report.train_error)];
    if let Some(t) = &report.test_error {
        rows.push(("test", t));
    }
    print_error_table(&rows);
    for f in &report.failures {
        eprintln!("warning: {f}");
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let model = load_model(&a.common.model)?;
    let samples = load_samples(&a.dataset, &model, a.ingest.as_deref())?;
    let theta = load_theta(a.params.as_deref(), &model)?;
    let settings = a.solver.apply(SolverSettings {
        tol: 1e-12,
        ..SolverSettings::default()
    })?;
    let report = evaluate(&model, &theta, &samples, &settings, elastokin::calibration::DEFAULT_BIN_WIDTH)?;
    io::write_json(&a.common.out.join("evaluation.json"), &report)?;
    io::write_atomic(&a.common.out.join("residuals.csv"), io::residuals_csv(&report)?.as_bytes())?;
    io::write_atomic(&a.common.out.join("histogram.csv"), io::histogram_csv(&report.histogram)?.as_bytes())?;
    print_error_table(&[("dataset", &report)]);
    Ok(())
}

fn ablation(a: AblationArgs) -> anyhow::Result<()> {
    let model = rigid(&load_model(&a.common.model)?);
    let mode: AblationMode = a.mode.parse()?;
    let train = load_samples(&a.dataset, &model, a.cal.ingest.as_deref())?;
    let test = load_samples(&a.test, &model, a.cal.ingest.as_deref())?;
    let prior = load_prior(a.cal.prior.as_deref(), &model)?;
    let options = calibration_options(&a.cal, a.common.seed)?;
    let rows = ablation_study(&model, &train, &test, &prior, mode, &options)?;
    io::write_atomic(&a.common.out.join("ablation.csv"), io::ablation_csv(&rows)?.as_bytes())?;
    io::write_json(&a.common.out.join("ablation.json"), &rows)?;
    println!("{:<26} {:>10} {:>10} {:>10}", "model", "mean [mm]", "rms [mm]", "max [mm]");
    for r in &rows {
        let t = r.report.test_error.as_ref().map(|e| e.combined).unwrap_or_default();
        println!("{:<26} {:>10} {:>10} {:>10}", r.label, mm(t.mean), mm(t.rms), mm(t.max));
    }
    Ok(())
}

fn set_size(a: SetSizeArgs) -> anyhow::Result<()> {
    let model = rigid(&load_model(&a.common.model)?);
    let pool = load_samples(&a.dataset, &model, a.cal.ingest.as_deref())?;
    let test = load_samples(&a.test, &model, a.cal.ingest.as_deref())?;
    let prior = load_prior(a.cal.prior.as_deref(), &model)?;
    let options = calibration_options(&a.cal, a.common.seed)?;
    let mask = ParamLayout::new(&model, &prior.mean).mask(&parse_groups(&a.groups)?);
    let rows = set_size_study(&model, &pool, &test, &prior, &mask, &a.sizes, a.repeats, a.common.seed, &options)?;
    io::write_atomic(&a.common.out.join("set_size.csv"), io::set_size_csv(&rows)?.as_bytes())?;
    io::write_json(&a.common.out.join("set_size.json"), &rows)?;
    println!("{:>6} {:>10} {:>10}", "N", "mean [mm]", "std [mm]");
    for r in &rows {
        println!("{:>6} {:>10} {:>10}", r.size, mm(r.mean), mm(r.std));
    }
    Ok(())
}

fn select_poses(a: SelectPosesArgs) -> anyhow::Result<()> {
    let model = load_model(&a.common.model)?;
    let outcome = sample_feasible(&model, a.n, a.common.seed, &SamplingOptions::default())?;
    let metric = JointMetric::from_velocity_limits(&model.velocity_limits);
    let batches = order_poses(&outcome.configurations, a.batch_size, &metric)?;
    let ordered: Vec<Sample> = batches
        .iter()
        .flat_map(|b| b.configurations.iter())
        .map(|q| Sample {
            q: q.clone(),
            y_right: None,
            y_left: None,
        })
        .collect();
    io::write_dataset(&a.common.out.join("poses.csv"), model.n_joints(), &ordered)?;
    let summary: Vec<_> = batches
        .iter()
        .zip(outcome.configurations.chunks(a.batch_size))
        .map(|(b, raw)| json!({"order": b.order, "tour_cost": b.tour_cost, "sampled_order_cost": tour_cost(raw, &metric)}))
        .collect();
    io::write_json(
        &a.common.out.join("tours.json"),
        &json!({"attempts": outcome.attempts, "feasibility_rate": outcome.feasibility_rate, "batches": summary}),
    )?;
    println!("feasible {} of {} attempts ({:.4})", a.n, outcome.attempts, outcome.feasibility_rate);
    println!("{:>5} {:>6} {:>12} {:>12}", "batch", "poses", "tour [s]", "sampled [s]");
    for (k, (b, raw)) in batches.iter().zip(outcome.configurations.chunks(a.batch_size)).enumerate() {
        println!(
            "{:>5} {:>6} {:>12.2} {:>12.2}",
            k,
            b.configurations.len(),
            b.tour_cost,
            tour_cost(raw, &metric)
        );
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> anyhow::Result<()> {
    let model = load_model(&a.common.model)?;
    let theta = load_theta(a.params.as_deref(), &model)?;
    if a.stiffness_scale.iter().any(|s| !(*s > 0.0)) {
        bail!("stiffness scales must be positive");
    }
    let scales: Vec<f64> = a.stiffness_scale.iter().map(|s| 1.0 / s).collect();
    let settings = a.solver.apply(SolverSettings::default())?;
    let curves = convergence_study(&model, &theta, &scales, a.n, a.common.seed, &settings)?;
    io::write_atomic(&a.common.out.join("convergence.csv"), io::convergence_csv(&curves)?.as_bytes())?;
    io::write_json(&a.common.out.join("convergence.json"), &curves)?;
    println!(
        "{:>10} {:>10} {:>12} {:>16}",
        "stiffness", "converged", "mean iters", "iter-1 err [mm]"
    );
    for (s, c) in a.stiffness_scale.iter().zip(&curves) {
        let e1 = c.mean_error_to_converged.get(1).copied().unwrap_or(0.0);
        println!("{:>10} {:>10} {:>12.2} {:>16.5}", s, format!("{}/{}", c.converged, c.configurations), c.mean_iterations, e1 * 1e3);
    }
    Ok(())
}

fn planner_settings(lambda: Option<f64>, tol: Option<f64>) -> anyhow::Result<PlannerSettings> {
    let mut s = PlannerSettings::default();
    if let Some(l) = lambda {
        if !(l > 0.0 && l <= 1.0) {
            bail!("--lambda must lie in (0, 1]");
        }
        s.lambda = l;
    }
    if let Some(t) = tol {
        if !(t > 0.0) {
            bail!("--tol must be positive");
        }
        s.step_tol = t;
    }
    Ok(s)
}

fn cmd_plan(a: PlanArgs) -> anyhow::Result<()> {
    let model = load_model(&a.common.model)?;
    let mut theta = load_theta(a.params.as_deref(), &model)?;
    if !(a.stiffness_scale > 0.0) {
        bail!("--stiffness-scale must be positive");
    }
    theta.compliance = theta.compliance.scaled(1.0 / a.stiffness_scale);
    let problems = io::load_problems(&a.problems, &model)?;
    let selected: Vec<&PlanningProblem> = problems
        .iter()
        .filter(|p| a.problem.as_ref().map_or(true, |n| &p.name == n))
        .collect();
    if selected.is_empty() {
        bail!("no matching problem in {}", a.problems.display());
    }
    let mut settings = planner_settings(a.lambda, a.tol)?;
    if a.geometric {
        settings.mode = KinematicsMode::Geometric;
    }
    println!(
        "{:<14} {:>8} {:>12} {:>14} {:>14}",
        "problem", "iters", "objective", "rho res [rad]", "tcp diff [mm]"
    );
    let mut results = Vec::new();
    for p in selected {
        let r = plan(&model, &theta, &p.start, &p.goal, &p.objective, &settings)?;
        let check = verify_equilibrium_at_solution(&model, &theta, &r, 1e-12)?;
        println!(
            "{:<14} {:>8} {:>12.6} {:>14.3e} {:>14.6}",
            p.name,
            r.outer_iterations,
            r.objective_trace.last().copied().unwrap_or(f64::NAN),
            check.max_rho_residual,
            check.max_tcp_discrepancy * 1e3
        );
        results.push(json!({"name": p.name, "result": r, "check": check}));
    }
    io::write_json(&a.common.out.join("plans.json"), &results)?;
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> anyhow::Result<()> {
    let model = load_model(&a.common.model)?;
    let theta = load_theta(a.params.as_deref(), &model)?;
    let problems = match &a.problems {
        Some(p) => io::load_problems(p, &model)?,
        None => planning_suite(&model, a.suite_size, a.obstacles, a.common.seed)?,
    };
    let settings = planner_settings(a.lambda, a.tol)?;
    let rows = compensation_benchmark(&model, &theta, &problems, &a.stiffness_scale, &settings)?;
    io::write_atomic(&a.common.out.join("benchmark.csv"), io::benchmark_csv(&rows)?.as_bytes())?;
    io::write_json(&a.common.out.join("benchmark.json"), &rows)?;
    println!(
        "{:>10} {:>7} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "stiffness", "solved", "iters", "inflation", "rel time", "overhead", "tcp [mm]"
    );
    for r in &rows {
        println!(
            "{:>10} {:>7} {:>10.1} {:>10.3} {:>10.3} {:>10.4} {:>12.2e}",
            if r.stiffness_scale.is_infinite() { "rigid".to_string() } else { format!("{}", r.stiffness_scale) },
            r.solved,
            r.mean_outer_iterations,
            r.iteration_inflation,
            r.relative_time_per_iteration,
            r.elastic_overhead,
            r.max_tcp_discrepancy * 1e3
        );
    }
    Ok(())
}

fn export(a: ExportArgs) -> anyhow::Result<()> {
    let model = reference_model();
    io::save_model(&model, &a.out.join("model.json"))?;
    let widths = PriorWidths::default();
    io::write_json(
        &a.out.join("prior.json"),
        &io::PriorFile {
            units: io::Units::default(),
            widths: PriorWidths {
                compliance: widths.compliance / io::ComplianceUnit::RadPerKnm.to_internal(),
                ..widths
            },
            sigma_m: DEFAULT_SIGMA_M,
            mean: None,
        },
    )?;
    let problems = planning_suite(&model, a.suite_size, a.obstacles, a.seed)?;
    io::save_problems(&problems, &a.out.join("problems.json"))?;
    io::write_json(&a.out.join("truth_spec.json"), &TruthSpec::default())?;
    println!(
        "{} links, {} joints, {:.1} kg; {} planning problems",
        model.n_links(),
        model.n_joints(),
        model.total_mass(),
        problems.len()
    );
    Ok(())
}
