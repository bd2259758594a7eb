//! Plot-ready CSV tables. Lengths are written in millimetres.

use serde::{Deserialize, Serialize};

use crate::calibration::{AblationRow, ErrorReport, Histogram, SetSizeRow};
use crate::error::{Error, Result};
use crate::planner::BenchmarkRow;

fn mm(v: f64) -> String {
    format!("{:.6}", v * 1e3)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Mean and max TCP error of each model variant on calibration and test data.
pub fn ablation_csv(rows: &[AblationRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "active_parameters",
        "train_mean_mm",
        "train_max_mm",
        "test_mean_mm",
        "test_max_mm",
        "test_rms_mm",
        "multistart_spread",
    ])?;
    for r in rows {
        let test = r.report.test_error.as_ref().map(|t| t.combined).unwrap_or_default();
        w.write_record([
            r.label.clone(),
            r.report.active_parameters.to_string(),
            mm(r.report.train_error.combined.mean),
            mm(r.report.train_error.combined.max),
            mm(test.mean),
            mm(test.max),
            mm(test.rms),
            format!("{:.6e}", r.report.multistart_spread),
        ])?;
    }
    finish(w)
}

pub fn set_size_csv(rows: &[SetSizeRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["size", "repeats", "mean_mm", "std_mm", "min_mm", "max_mm"])?;
    for r in rows {
        w.write_record([
            r.size.to_string(),
            r.errors.len().to_string(),
            mm(r.mean),
            mm(r.std),
            mm(r.min),
            mm(r.max),
        ])?;
    }
    finish(w)
}

pub fn histogram_csv(h: &Histogram) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_start_mm", "bin_end_mm", "count"])?;
    for (k, c) in h.counts.iter().enumerate() {
        w.write_record([mm(k as f64 * h.bin_width), mm((k + 1) as f64 * h.bin_width), c.to_string()])?;
    }
    finish(w)
}

pub fn residuals_csv(report: &ErrorReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "residual_mm"])?;
    for (i, r) in report.residuals.iter().enumerate() {
        w.write_record([i.to_string(), mm(*r)])?;
    }
    finish(w)
}

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "stiffness_scale",
        "solved",
        "skipped",
        "mean_outer_iterations",
        "iteration_inflation",
        "mean_time_per_iteration_s",
        "relative_time_per_iteration",
        "elastic_overhead",
        "max_equilibrium_residual_rad",
        "max_tcp_discrepancy_mm",
    ])?;
    for r in rows {
        w.write_record([
            if r.stiffness_scale.is_infinite() {
                "inf".to_string()
            } else {
                r.stiffness_scale.to_string()
            },
            r.solved.to_string(),
            r.skipped.join(";"),
            format!("{:.3}", r.mean_outer_iterations),
            format!("{:.4}", r.iteration_inflation),
            format!("{:.6e}", r.mean_time_per_iteration),
            format!("{:.4}", r.relative_time_per_iteration),
            format!("{:.4}", r.elastic_overhead),
            format!("{:.3e}", r.max_equilibrium_residual),
            mm(r.max_tcp_discrepancy),
        ])?;
    }
    finish(w)
}

/// Per-iteration TCP behaviour of the equilibrium solver at one stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    /// Compliance multiplier relative to the reference.
    pub compliance_scale: f64,
    pub configurations: usize,
    /// Mean TCP movement between consecutive iterations (m).
    pub mean_delta: Vec<f64>,
    /// Mean TCP distance to the converged pose after each iteration (m).
    pub mean_error_to_converged: Vec<f64>,
    pub max_error_to_converged: Vec<f64>,
    /// Configurations that converged within the iteration cap.
    pub converged: usize,
    pub mean_iterations: f64,
}

pub fn convergence_csv(curves: &[ConvergenceCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "compliance_scale",
        "iteration",
        "mean_tcp_delta_mm",
        "mean_error_to_converged_mm",
        "max_error_to_converged_mm",
    ])?;
    for c in curves {
        for k in 0..c.mean_error_to_converged.len() {
            w.write_record([
                c.compliance_scale.to_string(),
                (k + 1).to_string(),
                mm(c.mean_delta.get(k).copied().unwrap_or(0.0)),
                mm(c.mean_error_to_converged[k]),
                mm(c.max_error_to_converged[k]),
            ])?;
        }
    }
    finish(w)
}
