use serde::{Deserialize, Serialize};

use super::measure::{measure, Sample};
use super::params::CalibrationParams;
use crate::elastic::SolverSettings;
use crate::error::Result;
use crate::model::RobotModel;

/// Statistics of Euclidean marker residuals (m).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub max: f64,
    pub rms: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn from_values(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        Self {
            mean: v.iter().sum::<f64>() / n,
            max: v.iter().copied().fold(0.0, f64::max),
            rms: (v.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            count: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// m
    pub bin_width: f64,
    /// `counts[k]` holds residuals in `[k·w, (k+1)·w)`.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bin_width: f64) -> Self {
        let mut counts = Vec::new();
        for v in values {
            let k = (v / bin_width).floor() as usize;
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        Self { bin_width, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub right: ErrorStats,
    pub left: ErrorStats,
    pub combined: ErrorStats,
    pub histogram: Histogram,
    /// Residual norm per present marker, sample-major, right before left.
    pub residuals: Vec<f64>,
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.5e-3;

/// Marker residuals of `theta` on `testset`.
pub fn evaluate(
    model: &RobotModel,
    theta: &CalibrationParams,
    testset: &[Sample],
    settings: &SolverSettings,
    bin_width: f64,
) -> Result<ErrorReport> {
    let mut right = Vec::new();
    let mut left = Vec::new();
    let mut residuals = Vec::new();
    for s in testset {
        let [hr, hl] = measure(model, &s.q, theta, settings)?;
        if let Some(y) = s.y_right {
            let e = (y - hr).norm();
            right.push(e);
            residuals.push(e);
        }
        if let Some(y) = s.y_left {
            let e = (y - hl).norm();
            left.push(e);
            residuals.push(e);
        }
    }
    Ok(ErrorReport {
        right: ErrorStats::from_values(&right),
        left: ErrorStats::from_values(&left),
        combined: ErrorStats::from_values(&residuals),
        histogram: Histogram::new(&residuals, bin_width),
        residuals,
    })
}
